"""Offline bird's-eye-view rendering of simulated episodes to SVG frames.

World-to-image transform: px = (x - min_x) * scale + pad,
py = (max_y - y) * scale + pad (y grows downward in image space), where the
bounds come from the lane-graph geometry. One SVG file per simulation step:
frame_00001.svg, frame_00002.svg, ...

Drawn layers: lane centerlines (dashed grey), road edges (black), solid
lines (orange), goal (red disc of the completion radius), other agents
(blue boxes), ego (green box, heading tick).
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .metrics import GOAL_RADIUS, box_corners
from .scenario import Scenario


class _Frame:
    def __init__(self, scenario: Scenario, scale: float, pad: float):
        pts = np.vstack([ln.centerline for ln in scenario.lane_graph.lanes]
                        + list(scenario.lane_graph.road_edges))
        self.min_x = float(pts[:, 0].min()) - 5.0
        self.max_y = float(pts[:, 1].max()) + 5.0
        self.scale = scale
        self.pad = pad
        self.width = int((float(pts[:, 0].max()) + 5.0 - self.min_x) * scale + 2 * pad)
        self.height = int((self.max_y - (float(pts[:, 1].min()) - 5.0)) * scale + 2 * pad)

    def pt(self, x: float, y: float) -> tuple[float, float]:
        return ((x - self.min_x) * self.scale + self.pad,
                (self.max_y - y) * self.scale + self.pad)

    def poly_attr(self, points) -> str:
        return " ".join(f"{px:.1f},{py:.1f}" for px, py in
                        (self.pt(x, y) for x, y in points))


def _polygon(frame: _Frame, corners, fill: str, opacity: str = "0.9") -> str:
    return (f'<polygon points="{frame.poly_attr(corners)}" fill="{fill}" '
            f'fill-opacity="{opacity}" stroke="black" stroke-width="0.5"/>')


def render_frame(scenario: Scenario, ego_pose, ego_extent, agents,
                 frame: _Frame) -> str:
    """One SVG document. ego_pose = (x, y, heading); agents yield
    (x, y, heading, length, width)."""
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" '
             f'width="{frame.width}" height="{frame.height}" '
             f'viewBox="0 0 {frame.width} {frame.height}">',
             f'<rect width="{frame.width}" height="{frame.height}" fill="white"/>']
    for ln in scenario.lane_graph.lanes:
        parts.append(f'<polyline points="{frame.poly_attr(ln.centerline)}" '
                     'fill="none" stroke="#bbbbbb" stroke-width="1" '
                     'stroke-dasharray="6 4"/>')
    for edge in scenario.lane_graph.road_edges:
        parts.append(f'<polyline points="{frame.poly_attr(edge)}" '
                     'fill="none" stroke="#222222" stroke-width="1.5"/>')
    for line in scenario.lane_graph.solid_lines:
        parts.append(f'<polyline points="{frame.poly_attr(line)}" '
                     'fill="none" stroke="#d98e04" stroke-width="1.5"/>')
    gx, gy = frame.pt(*scenario.goal)
    parts.append(f'<circle cx="{gx:.1f}" cy="{gy:.1f}" '
                 f'r="{GOAL_RADIUS * frame.scale:.1f}" fill="red" fill-opacity="0.5"/>')
    for (x, y, heading, length, width) in agents:
        parts.append(_polygon(frame, box_corners(x, y, heading, length, width),
                              "#4878b0"))
    ex, ey, eth = ego_pose
    el, ew = ego_extent
    parts.append(_polygon(frame, box_corners(ex, ey, eth, el, ew), "#2a9d34"))
    tip = frame.pt(ex + 0.5 * el * math.cos(eth), ey + 0.5 * el * math.sin(eth))
    ctr = frame.pt(ex, ey)
    parts.append(f'<line x1="{ctr[0]:.1f}" y1="{ctr[1]:.1f}" '
                 f'x2="{tip[0]:.1f}" y2="{tip[1]:.1f}" stroke="black" stroke-width="1"/>')
    parts.append("</svg>")
    return "\n".join(parts)


def render_episode(scenario: Scenario, steps, ego_extent, out_dir,
                   scale: float = 6.0, pad: float = 10.0) -> list[Path]:
    """Write one SVG per step record.

    steps yields dicts with keys "step", "ego" [x, y, theta, v], and
    "agents" [[agent_id, x, y, heading, length, width], ...] (the episode
    log format produced by the simulate command).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frame = _Frame(scenario, scale, pad)
    written = []
    for rec in steps:
        ego = rec["ego"]
        svg = render_frame(scenario, (ego[0], ego[1], ego[2]), ego_extent,
                           [(a[1], a[2], a[3], a[4], a[5]) for a in rec["agents"]],
                           frame)
        path = out / f"frame_{rec['step']:05d}.svg"
        path.write_text(svg)
        written.append(path)
    return written

/**
 * Arena rendering: a frame is reduced to a typed scene (circles, wedges,
 * markers), which the terminal painter rasterizes. Keeping the scene as
 * data makes the geometry testable without a display.
 */

import { Frame, WorldSnapshot } from "./protocol.js";

export interface GoalShape {
  kind: "goal";
  x: number;
  y: number;
  radius: number;
}

export interface AgentShape {
  kind: "agent";
  index: number;
  team: "attacker" | "defender";
  x: number;
  y: number;
  heading: number;
  tagged: boolean;
  /** tag cone half-angle (radians); wedge is drawn around the heading */
  coneHalfAngle: number;
  coneRange: number;
}

export type Shape = GoalShape | AgentShape;

export interface ArenaGeometry {
  half_extent: number;
  goal_position: [number, number];
  goal_radius: number;
  tag_half_angle: number;
  tag_range: number;
}

export function buildScene(frame: Frame, env: ArenaGeometry): Shape[] {
  const state: WorldSnapshot = frame.final_state ?? frame.state;
  const shapes: Shape[] = [
    {
      kind: "goal",
      x: env.goal_position[0],
      y: env.goal_position[1],
      radius: env.goal_radius,
    },
  ];
  state.agents.forEach((agent, index) => {
    shapes.push({
      kind: "agent",
      index,
      team: agent.team,
      x: agent.pos[0],
      y: agent.pos[1],
      heading: agent.heading,
      tagged: agent.tagged,
      coneHalfAngle: env.tag_half_angle,
      coneRange: env.tag_range,
    });
  });
  return shapes;
}

const ATTACKER_GLYPHS = "ABCDE";
const DEFENDER_GLYPHS = "12345";

/** Rasterize the scene into a text grid (y up). */
export function renderAscii(
  shapes: Shape[],
  env: ArenaGeometry,
  width = 41,
  height = 21,
): string {
  const grid: string[][] = Array.from({ length: height }, () => Array(width).fill(" "));
  const he = env.half_extent;
  const toCol = (x: number) => Math.round(((x + he) / (2 * he)) * (width - 1));
  const toRow = (y: number) => Math.round(((he - y) / (2 * he)) * (height - 1));
  const put = (x: number, y: number, ch: string) => {
    const c = toCol(x);
    const r = toRow(y);
    if (r >= 0 && r < height && c >= 0 && c < width) grid[r][c] = ch;
  };

  for (const shape of shapes) {
    if (shape.kind === "goal") {
      const steps = 24;
      for (let i = 0; i < steps; i++) {
        const a = (2 * Math.PI * i) / steps;
        put(shape.x + shape.radius * Math.cos(a), shape.y + shape.radius * Math.sin(a), "o");
      }
      put(shape.x, shape.y, "+");
    }
  }
  let attackerSeen = 0;
  for (const shape of shapes) {
    if (shape.kind !== "agent") continue;
    if (!shape.tagged) {
      // heading tick and the two cone edges
      for (const offset of [0, shape.coneHalfAngle, -shape.coneHalfAngle]) {
        const a = shape.heading + offset;
        const reach = offset === 0 ? 0.14 : 0.1;
        put(shape.x + reach * Math.cos(a), shape.y + reach * Math.sin(a), offset === 0 ? "-" : ".");
      }
    }
    const glyphs = shape.team === "attacker" ? ATTACKER_GLYPHS : DEFENDER_GLYPHS;
    const teamIndex = shape.team === "attacker" ? attackerSeen++ : shape.index - attackerSeen;
    const glyph = glyphs[Math.min(teamIndex, glyphs.length - 1)] ?? "?";
    put(shape.x, shape.y, shape.tagged ? "x" : glyph);
  }
  return grid.map((row) => row.join("")).join("\n");
}

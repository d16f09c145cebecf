import * as fs from "node:fs";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { Command, Frame, Hello, SchemaJson } from "../src/protocol.js";
import { InterventionPanel } from "../src/panel.js";
import { Schema, STRATEGY_LABELS } from "../src/schema.js";
import { ViewModel, formatValue } from "../src/viewmodel.js";

const here = path.dirname(fileURLToPath(import.meta.url));

export function goldenFrames(): Frame[] {
  const raw = fs.readFileSync(path.join(here, "golden", "frames.ndjson"), "utf-8");
  return raw
    .split("\n")
    .filter((line) => line.trim())
    .map((line) => JSON.parse(line));
}

export const HARD_2V2_SCHEMA: SchemaJson = {
  version: 1,
  mode: "hard",
  n_opponents: 2,
  specs: [
    { name: "range", kind: "continuous", multiplicity: 2, group_size: 1, binary: true },
    { name: "strategy", kind: "discrete_group", multiplicity: 1, group_size: 3, binary: false },
    { name: "target", kind: "discrete_group", multiplicity: 2, group_size: 2, binary: false },
    { name: "orientation", kind: "continuous", multiplicity: 2, group_size: 1, binary: false },
    { name: "position", kind: "continuous", multiplicity: 2, group_size: 1, binary: false },
  ],
};

function hello(): Hello {
  return {
    type: "hello",
    env: { half_extent: 1.0, goal_position: [0, 0.8], goal_radius: 0.15 },
    schema: HARD_2V2_SCHEMA,
    n_per_team: 2,
    rate: 10,
  };
}

describe("schema layout", () => {
  it("computes offsets that partition the 13 hard nodes", () => {
    const schema = new Schema(HARD_2V2_SCHEMA);
    expect(schema.j).toBe(13);
    expect(schema.layout("range").start).toBe(0);
    expect(schema.layout("strategy").start).toBe(2);
    expect(schema.layout("target").start).toBe(5);
    expect(schema.layout("target").groups.length).toBe(2);
    expect(schema.layout("orientation").start).toBe(9);
    expect(schema.layout("position").end).toBe(13);
    expect(STRATEGY_LABELS.length).toBe(3);
  });
});

describe("view model", () => {
  it("applies hello, frames and tracks the scoreboard from terminal frames", () => {
    const vm = new ViewModel();
    vm.apply(hello());
    expect(vm.connection).toBe("live");
    const frames = goldenFrames();
    for (const frame of frames) vm.apply(frame);
    expect(vm.latest).toEqual(frames[frames.length - 1]);
    expect(vm.framesSeen).toBe(frames.length);
    const terminal = frames.filter((f) => f.outcome !== "ongoing");
    expect(vm.episodesSeen).toBe(terminal.length);
    expect(vm.wins.defenders + vm.wins.attackers).toBe(terminal.length);
    expect(vm.winRate()).toBeCloseTo(vm.wins.defenders / terminal.length, 12);
  });

  it("keeps frame values bit-exact in state", () => {
    const vm = new ViewModel();
    vm.apply(hello());
    const frame = goldenFrames()[0];
    vm.apply(frame);
    const agent = Object.keys(frame.defenders)[0];
    const stored = vm.latest!.defenders[agent].predicted;
    frame.defenders[agent].predicted.forEach((v, i) =>
      expect(Object.is(stored[i], v)).toBe(true),
    );
  });

  it("clears pending interventions on ack and on error", () => {
    const vm = new ViewModel();
    vm.apply(hello());
    vm.trackPending(2, 7);
    vm.trackPending(2, 8);
    expect(vm.pending.size).toBe(2);
    vm.apply({ type: "ack", cmd: "set_intervention", id: 7, effective_step: 4 });
    expect(vm.pending.size).toBe(1);
    vm.apply({ type: "error", id: 8, message: "nope" });
    expect(vm.pending.size).toBe(0);
    expect(vm.lastError?.message).toBe("nope");
  });

  it("highlights discrete mismatches by argmax and continuous by threshold", () => {
    const vm = new ViewModel();
    vm.apply(hello());
    const frame = goldenFrames()[0];
    const agent = Object.keys(frame.defenders)[0];
    const block = frame.defenders[agent];
    // craft a controlled disagreement: strategy argmax differs, one
    // orientation node off by more than the threshold
    block.predicted = [...block.oracle];
    block.predicted[2] = 0.1;
    block.predicted[3] = 0.8;
    block.predicted[4] = 0.1;
    block.oracle[2] = 1.0;
    block.oracle[3] = 0.0;
    block.oracle[4] = 0.0;
    block.predicted[9] = block.oracle[9] + 0.2;
    block.predicted[10] = block.oracle[10] + 0.05; // below threshold
    vm.apply(frame);
    const reports = vm.mismatches(Number(agent));
    const concepts = reports.map((r) => `${r.concept}:${r.index}`);
    expect(concepts).toContain("strategy:0");
    expect(concepts).toContain("orientation:0");
    expect(concepts).not.toContain("orientation:1");
  });
});

describe("intervention panel", () => {
  function setup() {
    const vm = new ViewModel();
    vm.apply(hello());
    const sent: Command[] = [];
    const panel = new InterventionPanel(2, vm.schema!, (c) => sent.push(c), vm);
    return { vm, panel, sent };
  }

  it("emits one one-hot set_intervention when strategy is forced", () => {
    const { panel, sent } = setup();
    panel.chooseClass("strategy", 0, 1); // "right"
    expect(sent.length).toBe(0); // not enabled yet: no command
    panel.toggle("strategy", true);
    expect(sent.length).toBe(1);
    const cmd = sent[0] as Extract<Command, { cmd: "set_intervention" }>;
    expect(cmd.cmd).toBe("set_intervention");
    expect(cmd.agent).toBe(2);
    expect(cmd.mask.slice(2, 5)).toEqual([1, 1, 1]);
    expect(cmd.values.slice(2, 5)).toEqual([0, 1, 0]);
    expect(cmd.mask.reduce((a, b) => a + b, 0)).toBe(3);
  });

  it("emits exactly one clear_intervention when the last toggle goes off", () => {
    const { panel, sent } = setup();
    panel.chooseClass("strategy", 0, 2);
    panel.toggle("strategy", true);
    panel.toggle("strategy", false);
    expect(sent.length).toBe(2);
    expect(sent[1].cmd).toBe("clear_intervention");
  });

  it("tracks pending until acknowledged", () => {
    const { vm, panel, sent } = setup();
    panel.chooseClass("strategy", 0, 0);
    panel.toggle("strategy", true);
    expect(vm.pending.size).toBe(1);
    const id = (sent[0] as { id: number }).id;
    vm.apply({ type: "ack", cmd: "set_intervention", id, effective_step: 11 });
    expect(vm.pending.size).toBe(0);
  });

  it("copy-oracle prefills continuous values from the frame", () => {
    const { panel } = setup();
    const frame = goldenFrames()[0];
    const agent = 2;
    panel.copyOracle("orientation", frame);
    const oracle = frame.defenders[String(agent)].oracle.slice(9, 11);
    expect(panel.currentValues("orientation")).toEqual(oracle);
  });

  it("batch toggle emits a single combined command", () => {
    const { panel, sent } = setup();
    const frame = goldenFrames()[0];
    for (const name of panel.schema.names()) panel.copyOracle(name, frame);
    panel.toggleMany(panel.schema.names(), true);
    expect(sent.length).toBe(1);
    const cmd = sent[0] as Extract<Command, { cmd: "set_intervention" }>;
    expect(cmd.mask.every((m) => m === 1)).toBe(true);
    panel.toggleMany(panel.schema.names(), false);
    expect(sent.length).toBe(2);
    expect(sent[1].cmd).toBe("clear_intervention");
  });
});

describe("display fidelity", () => {
  it("formats to 4 decimals and only at format time", () => {
    expect(formatValue(0.123456789)).toBe("0.1235");
    expect(formatValue(-1.5)).toBe("-1.5000");
    expect(formatValue(0)).toBe("0.0000");
  });
});

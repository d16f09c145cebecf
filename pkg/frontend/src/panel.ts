/**
 * Intervention panel controller for one defender: per-concept toggles,
 * radio choices for discrete groups, numeric entries for continuous
 * concepts (pre-filled from the oracle), and "copy oracle". Every user
 * action that changes the intervention emits exactly one command.
 */

import { Command, Frame } from "./protocol.js";
import { Schema } from "./schema.js";
import { ViewModel } from "./viewmodel.js";

export class InterventionPanel {
  /** Per concept name: enabled flag plus the chosen values for its slice. */
  private enabled: Map<string, boolean> = new Map();
  private values: Map<string, number[]> = new Map();

  constructor(
    readonly agent: number,
    readonly schema: Schema,
    private send: (command: Command) => void,
    private vm: ViewModel,
  ) {
    for (const layout of schema.layouts) {
      this.enabled.set(layout.spec.name, false);
      this.values.set(layout.spec.name, new Array(layout.end - layout.start).fill(0));
    }
  }

  isEnabled(name: string): boolean {
    return this.enabled.get(name) ?? false;
  }

  currentValues(name: string): number[] {
    return [...(this.values.get(name) ?? [])];
  }

  /** Radio choice for a discrete group: one-hot within the group. */
  chooseClass(name: string, groupIndex: number, classIndex: number): void {
    const layout = this.schema.layout(name);
    const group = layout.groups[groupIndex];
    if (!group) throw new Error(`${name} has no group ${groupIndex}`);
    const vals = this.values.get(name)!;
    for (let i = group.start; i < group.end; i++) {
      vals[i - layout.start] = i - group.start === classIndex ? 1 : 0;
    }
    if (this.enabled.get(name)) this.emit();
  }

  setContinuous(name: string, nodeIndex: number, value: number): void {
    const layout = this.schema.layout(name);
    if (layout.spec.kind !== "continuous") throw new Error(`${name} is not continuous`);
    this.values.get(name)![nodeIndex] = value;
    if (this.enabled.get(name)) this.emit();
  }

  /** Pre-fill this concept's values from the latest frame's oracle. */
  copyOracle(name: string, frame: Frame): void {
    const layout = this.schema.layout(name);
    const block = frame.defenders[String(this.agent)];
    if (!block) throw new Error(`no defender block for agent ${this.agent}`);
    this.values.set(name, block.oracle.slice(layout.start, layout.end));
    if (this.enabled.get(name)) this.emit();
  }

  toggle(name: string, on: boolean): void {
    if (this.enabled.get(name) === on) return;
    this.enabled.set(name, on);
    this.emitOrClear();
  }

  /** Flip several concepts in one user action: exactly one command. */
  toggleMany(names: string[], on: boolean): void {
    let changed = false;
    for (const name of names) {
      if (this.enabled.get(name) !== on) {
        this.enabled.set(name, on);
        changed = true;
      }
    }
    if (changed) this.emitOrClear();
  }

  private emitOrClear(): void {
    const anyOn = [...this.enabled.values()].some(Boolean);
    if (!anyOn) {
      const id = this.vm.allocateCommandId();
      this.vm.trackPending(this.agent, id);
      this.send({ cmd: "clear_intervention", agent: this.agent, id });
      return;
    }
    this.emit();
  }

  /** The full-length (mask, values) pair across all enabled concepts. */
  buildPayload(): { mask: number[]; values: number[] } {
    const mask = new Array(this.schema.j).fill(0);
    const values = new Array(this.schema.j).fill(0);
    for (const layout of this.schema.layouts) {
      if (!this.enabled.get(layout.spec.name)) continue;
      const vals = this.values.get(layout.spec.name)!;
      for (let i = layout.start; i < layout.end; i++) {
        mask[i] = 1;
        values[i] = vals[i - layout.start];
      }
    }
    return { mask, values };
  }

  private emit(): void {
    const { mask, values } = this.buildPayload();
    const id = this.vm.allocateCommandId();
    this.vm.trackPending(this.agent, id);
    this.send({ cmd: "set_intervention", agent: this.agent, mask, values, id });
  }
}

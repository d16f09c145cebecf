/**
 * Client-side state: everything rendered comes from received frames (the
 * console never simulates). Pending interventions are tracked separately
 * until the server acknowledges them; the scoreboard aggregates terminal
 * frames.
 */

import { Ack, ErrorMessage, Frame, Hello, ServerMessage, isFrame } from "./protocol.js";
import { Schema } from "./schema.js";

/** Continuous concept entries further apart than this are highlighted. */
export const DEFAULT_MISMATCH_THRESHOLD = 0.1;

/** Values are kept bit-exact in state; rounding happens only here. */
export function formatValue(x: number): string {
  return x.toFixed(4);
}

export interface PendingIntervention {
  agent: number;
  commandId: number;
  sentAt: number; // local frame count when sent
}

export interface MismatchReport {
  concept: string;
  /** group index for discrete concepts, node index for continuous ones */
  index: number;
  predicted: string;
  oracle: string;
}

export type ConnectionState = "connecting" | "live" | "closed";

export class ViewModel {
  connection: ConnectionState = "connecting";
  hello: Hello | null = null;
  schema: Schema | null = null;
  latest: Frame | null = null;
  framesSeen = 0;
  lastAck: Ack | null = null;
  lastError: ErrorMessage | null = null;
  pending: Map<number, PendingIntervention> = new Map();
  wins = { defenders: 0, attackers: 0 };
  episodesSeen = 0;
  mismatchThreshold = DEFAULT_MISMATCH_THRESHOLD;
  private nextCommandId = 1;

  apply(msg: ServerMessage): void {
    if (isFrame(msg)) {
      this.applyFrame(msg);
      return;
    }
    if (msg.type === "hello") {
      this.hello = msg;
      this.schema = msg.schema ? new Schema(msg.schema) : null;
      this.connection = "live";
    } else if (msg.type === "ack") {
      this.lastAck = msg;
      if (typeof msg.id === "number" && this.pending.has(msg.id)) {
        this.pending.delete(msg.id);
      }
    } else if (msg.type === "error") {
      this.lastError = msg;
      if (typeof msg.id === "number" && this.pending.has(msg.id)) {
        this.pending.delete(msg.id); // server rejected it; panel reverts
      }
    }
  }

  private applyFrame(frame: Frame): void {
    this.latest = frame;
    this.framesSeen += 1;
    if (frame.outcome !== "ongoing") {
      this.episodesSeen += 1;
      if (frame.outcome === "defenders_win") this.wins.defenders += 1;
      else if (frame.outcome === "attackers_win") this.wins.attackers += 1;
    }
  }

  allocateCommandId(): number {
    return this.nextCommandId++;
  }

  trackPending(agent: number, commandId: number): void {
    this.pending.set(commandId, { agent, commandId, sentAt: this.framesSeen });
  }

  /** Highlighted prediction/oracle disagreements for one defender. */
  mismatches(agent: number): MismatchReport[] {
    if (!this.latest || !this.schema) return [];
    const block = this.latest.defenders[String(agent)];
    if (!block) return [];
    const out: MismatchReport[] = [];
    for (const layout of this.schema.layouts) {
      if (layout.spec.kind === "discrete_group") {
        for (const group of layout.groups) {
          const pred = argmax(block.predicted.slice(group.start, group.end));
          const truth = argmax(block.oracle.slice(group.start, group.end));
          if (pred !== truth) {
            out.push({
              concept: layout.spec.name,
              index: group.index,
              predicted: formatValue(block.predicted[group.start + pred]),
              oracle: `class ${truth}`,
            });
          }
        }
      } else {
        for (let i = layout.start; i < layout.end; i++) {
          const binary = layout.spec.binary;
          const pred = block.predicted[i];
          const truth = block.oracle[i];
          const differs = binary
            ? (pred > 0.5) !== (truth > 0.5)
            : Math.abs(pred - truth) > this.mismatchThreshold;
          if (differs) {
            out.push({
              concept: layout.spec.name,
              index: i - layout.start,
              predicted: formatValue(pred),
              oracle: formatValue(truth),
            });
          }
        }
      }
    }
    return out;
  }

  winRate(): number {
    return this.episodesSeen ? this.wins.defenders / this.episodesSeen : 0;
  }
}

function argmax(xs: number[]): number {
  let best = 0;
  for (let i = 1; i < xs.length; i++) if (xs[i] > xs[best]) best = i;
  return best;
}

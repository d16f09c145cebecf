/**
 * Wire protocol: every message is a 4-byte big-endian length prefix
 * followed by UTF-8 JSON. Mirrors the server's framing exactly.
 */

export interface AgentSnapshot {
  pos: [number, number];
  vel: [number, number];
  heading: number;
  hx: number;
  hy: number;
  tagged: boolean;
  team: "attacker" | "defender";
  cooldown: number;
}

export interface WorldSnapshot {
  t: number;
  outcome: string;
  agents: AgentSnapshot[];
}

export interface InterventionPayload {
  mask: number[];
  values: number[];
  provenance: string;
}

export interface DefenderBlock {
  predicted: number[];
  effective: number[];
  oracle: number[];
  intervention: InterventionPayload | null;
  value: number;
  action: number;
  reward: number;
}

export interface Frame {
  v: number;
  episode: number;
  t: number;
  schema: string | null;
  strategy: number;
  state: WorldSnapshot;
  defenders: Record<string, DefenderBlock>;
  events: { tags: [number, number][]; misses: number[]; newly_tagged: number[] };
  active_interventions: Record<string, InterventionPayload>;
  outcome: string;
  final_state?: WorldSnapshot;
}

export interface ConceptSpecJson {
  name: string;
  kind: "discrete_group" | "continuous";
  multiplicity: number;
  group_size: number;
  binary: boolean;
}

export interface SchemaJson {
  version: number;
  mode: string;
  n_opponents: number;
  specs: ConceptSpecJson[];
}

export interface Hello {
  type: "hello";
  env: Record<string, unknown>;
  schema: SchemaJson | null;
  n_per_team: number;
  rate: number;
}

export interface Ack {
  type: "ack";
  cmd: string;
  id: unknown;
  effective_step: number;
}

export interface ErrorMessage {
  type: "error";
  id: unknown;
  message: string;
}

export type ServerMessage = Frame | Hello | Ack | ErrorMessage;

export type Command =
  | { cmd: "pause"; id?: unknown }
  | { cmd: "resume"; id?: unknown }
  | { cmd: "step_once"; id?: unknown }
  | { cmd: "set_speed"; factor: number; id?: unknown }
  | { cmd: "set_intervention"; agent: number; mask: number[]; values: number[]; id?: unknown }
  | { cmd: "clear_intervention"; agent: number; id?: unknown }
  | { cmd: "reset_episode"; seed?: number; id?: unknown };

export function isFrame(msg: ServerMessage): msg is Frame {
  return (msg as Frame).state !== undefined && (msg as Frame).t !== undefined;
}

export function encodeMessage(obj: unknown): Buffer {
  const payload = Buffer.from(JSON.stringify(obj), "utf-8");
  const header = Buffer.alloc(4);
  header.writeUInt32BE(payload.length, 0);
  return Buffer.concat([header, payload]);
}

const MAX_MESSAGE = 16 * 1024 * 1024;

/** Incremental decoder; feed() returns every message completed so far. */
export class MessageDecoder {
  private buffer: Buffer = Buffer.alloc(0);

  feed(data: Buffer): ServerMessage[] {
    this.buffer = this.buffer.length ? Buffer.concat([this.buffer, data]) : data;
    const out: ServerMessage[] = [];
    for (;;) {
      if (this.buffer.length < 4) return out;
      const length = this.buffer.readUInt32BE(0);
      if (length > MAX_MESSAGE) {
        throw new Error(`message of ${length} bytes exceeds the limit`);
      }
      if (this.buffer.length < 4 + length) return out;
      const payload = this.buffer.subarray(4, 4 + length).toString("utf-8");
      this.buffer = Buffer.from(this.buffer.subarray(4 + length));
      out.push(JSON.parse(payload));
    }
  }
}

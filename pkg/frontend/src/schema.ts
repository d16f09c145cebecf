/**
 * Concept schema helpers: node offsets per named concept and the discrete
 * group ranges (for building one-hot interventions).
 */

import { ConceptSpecJson, SchemaJson } from "./protocol.js";

export interface ConceptGroup {
  /** group index within its concept (0..multiplicity-1) */
  index: number;
  start: number;
  end: number;
}

export interface ConceptLayout {
  spec: ConceptSpecJson;
  start: number;
  end: number;
  groups: ConceptGroup[]; // empty for continuous concepts
}

export class Schema {
  readonly j: number;
  readonly layouts: ConceptLayout[];

  constructor(readonly json: SchemaJson) {
    let offset = 0;
    this.layouts = json.specs.map((spec) => {
      const nodes =
        spec.kind === "discrete_group" ? spec.multiplicity * spec.group_size : spec.multiplicity;
      const layout: ConceptLayout = { spec, start: offset, end: offset + nodes, groups: [] };
      if (spec.kind === "discrete_group") {
        for (let m = 0; m < spec.multiplicity; m++) {
          layout.groups.push({
            index: m,
            start: offset + m * spec.group_size,
            end: offset + (m + 1) * spec.group_size,
          });
        }
      }
      offset += nodes;
      return layout;
    });
    this.j = offset;
  }

  layout(name: string): ConceptLayout {
    const found = this.layouts.find((l) => l.spec.name === name);
    if (!found) throw new Error(`unknown concept ${name}`);
    return found;
  }

  names(): string[] {
    return this.layouts.map((l) => l.spec.name);
  }
}

export const STRATEGY_LABELS = ["left", "right", "random"];

/**
 * Text composition for the concept panels: every number shown comes
 * straight from the frame payload, rounded only at format time.
 */

import { Frame } from "./protocol.js";
import { ViewModel, formatValue } from "./viewmodel.js";

export function panelLines(vm: ViewModel, agent: number, frame: Frame): string[] {
  const lines: string[] = [];
  const block = frame.defenders[String(agent)];
  const schema = vm.schema;
  if (!block || !schema) return [`defender ${agent}: (inactive)`];
  const mismatches = vm.mismatches(agent);
  const flagged = new Set(mismatches.map((m) => `${m.concept}:${m.index}`));
  lines.push(
    `defender ${agent}  action ${block.action}  reward ${formatValue(block.reward)}  value ${formatValue(block.value)}` +
      (block.intervention ? `  [intervened: ${block.intervention.provenance}]` : ""),
  );
  for (const layout of schema.layouts) {
    const pred = block.predicted.slice(layout.start, layout.end).map(formatValue);
    const oracle = block.oracle.slice(layout.start, layout.end).map(formatValue);
    const flaggedHere =
      layout.spec.kind === "discrete_group"
        ? layout.groups.some((g) => flagged.has(`${layout.spec.name}:${g.index}`))
        : pred.some((_, i) => flagged.has(`${layout.spec.name}:${i}`));
    lines.push(`  ${layout.spec.name.padEnd(12)} pred [${pred.join(" ")}]`);
    lines.push(
      `  ${"".padEnd(12)} true [${oracle.join(" ")}]${flaggedHere ? "  <- mismatch" : ""}`,
    );
  }
  return lines;
}

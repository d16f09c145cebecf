/**
 * Terminal operator console.
 *
 *   node dist/main.js [host:port] [--agent N]
 *
 * Renders the arena and the focused defender's concept panel on every
 * frame; single-key controls drive playback and interventions:
 *
 *   space pause/resume   n step once    +/- speed    r reset episode
 *   a     cycle focused defender
 *   s     toggle a strategy intervention on the focused defender and
 *         cycle its forced class (left -> right -> random -> off)
 *   g     toggle a range intervention (all bits 1) / off
 *   o     copy-oracle intervention on every concept / off
 *   q     quit
 */

import { ConsoleClient } from "./client.js";
import { panelLines } from "./display.js";
import { Frame, isFrame } from "./protocol.js";
import { ArenaGeometry, buildScene, renderAscii } from "./render.js";
import { InterventionPanel } from "./panel.js";
import { STRATEGY_LABELS } from "./schema.js";
import { ViewModel, formatValue } from "./viewmodel.js";

function parseArgs(): { host: string; port: number; agent: number | null } {
  const args = process.argv.slice(2);
  let address = "127.0.0.1:7787";
  let agent: number | null = null;
  for (let i = 0; i < args.length; i++) {
    if (args[i] === "--agent") agent = Number(args[++i]);
    else address = args[i];
  }
  const [host, port] = address.split(":");
  return { host, port: Number(port ?? 7787), agent };
}

async function main() {
  const { host, port, agent } = parseArgs();
  const vm = new ViewModel();
  let focused = agent;
  let panel: InterventionPanel | null = null;
  let strategyCycle = -1;
  let rangeOn = false;
  let oracleOn = false;
  let paused = false;
  let speed = 1.0;

  const client = new ConsoleClient(host, port, {
    onMessage: (msg) => {
      vm.apply(msg);
      if (isFrame(msg)) redraw(msg);
    },
    onClose: () => {
      vm.connection = "closed";
      console.log("\nconnection closed");
      process.exit(0);
    },
    onError: (err) => {
      console.error("socket error:", err.message);
    },
  });

  function ensurePanel(): InterventionPanel | null {
    if (!vm.schema || focused === null) return null;
    if (!panel || panel.agent !== focused) {
      panel = new InterventionPanel(focused, vm.schema, (c) => client.send(c), vm);
      strategyCycle = -1;
      rangeOn = false;
      oracleOn = false;
    }
    return panel;
  }

  function redraw(frame: Frame) {
    if (focused === null && vm.hello) {
      focused = vm.hello.n_per_team; // first defender
    }
    const env = vm.hello?.env as unknown as ArenaGeometry | undefined;
    const out: string[] = [];
    out.push(
      `episode ${frame.episode}  t ${frame.t}  strategy ${STRATEGY_LABELS[frame.strategy]}  ` +
        `outcome ${frame.outcome}  score D:${vm.wins.defenders} A:${vm.wins.attackers} ` +
        `(${vm.episodesSeen} done, WR ${formatValue(vm.winRate())})  ` +
        `${paused ? "PAUSED" : `x${speed.toFixed(2)}`}  pending:${vm.pending.size}`,
    );
    if (env) out.push(renderAscii(buildScene(frame, env), env));
    if (focused !== null) out.push(...panelLines(vm, focused, frame));
    if (vm.lastError) out.push(`last error: ${vm.lastError.message}`);
    console.clear();
    console.log(out.join("\n"));
  }

  await client.connect();
  console.log(`connected to ${host}:${port}`);

  process.stdin.setRawMode?.(true);
  process.stdin.resume();
  process.stdin.on("data", (key) => {
    const ch = key.toString();
    const p = ensurePanel();
    if (ch === "q" || ch === "") {
      client.close();
      process.exit(0);
    } else if (ch === " ") {
      paused = !paused;
      client.send({ cmd: paused ? "pause" : "resume" });
    } else if (ch === "n") {
      client.send({ cmd: "step_once" });
    } else if (ch === "+" || ch === "=") {
      speed = Math.min(speed * 2, 16);
      client.send({ cmd: "set_speed", factor: speed });
    } else if (ch === "-") {
      speed = Math.max(speed / 2, 0.125);
      client.send({ cmd: "set_speed", factor: speed });
    } else if (ch === "r") {
      client.send({ cmd: "reset_episode" });
    } else if (ch === "a" && vm.hello) {
      const first = vm.hello.n_per_team;
      const count = vm.hello.n_per_team;
      focused = focused === null ? first : first + ((focused - first + 1) % count);
    } else if (ch === "s" && p) {
      strategyCycle = (strategyCycle + 2) % 4 - 1; // -1,0,1,2,-1,...
      if (strategyCycle < 0) p.toggle("strategy", false);
      else {
        p.chooseClass("strategy", 0, strategyCycle);
        p.toggle("strategy", true);
      }
    } else if (ch === "g" && p) {
      rangeOn = !rangeOn;
      if (rangeOn) {
        const layout = p.schema.layout("range");
        for (let i = 0; i < layout.end - layout.start; i++) p.setContinuous("range", i, 1);
        p.toggle("range", true);
      } else {
        p.toggle("range", false);
      }
    } else if (ch === "o" && p && vm.latest) {
      oracleOn = !oracleOn;
      if (oracleOn) {
        for (const name of p.schema.names()) p.copyOracle(name, vm.latest);
      }
      p.toggleMany(p.schema.names(), oracleOn);
    }
  });
}

main().catch((err) => {
  console.error(err);
  process.exit(1);
});

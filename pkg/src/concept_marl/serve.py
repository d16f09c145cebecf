"""Live-episode server: streams frames over TCP and takes control commands.

One simulation thread runs episodes continuously through the same frame
generator the offline evaluator uses, so streamed frames are bit-identical
to offline logs for the same checkpoint and seed. Client IO runs on
separate threads; commands queue up and are drained at step boundaries,
acknowledged with the step index at which they take effect. Manual
interventions stick until cleared; slow clients are disconnected once
their send backlog fills.

Commands (JSON objects):
    {"cmd": "pause" | "resume" | "step_once"}
    {"cmd": "set_speed", "factor": float}
    {"cmd": "set_intervention", "agent": int, "mask": [0/1 * j],
     "values": [float * j]}
    {"cmd": "clear_intervention", "agent": int}
    {"cmd": "reset_episode", "seed": optional int}
Any command may carry an "id"; it is echoed in the acknowledgment.
"""

from __future__ import annotations

import queue
import socket
import threading
import time

import numpy as np

from .config import RunConfig
from .env import defender_indices
from .eval_harness import episode_frames
from .framelog import MessageDecoder, encode_message, read_frames
from .policy import Intervention

SEND_BACKLOG = 256


class _Client:
    def __init__(self, sock: socket.socket, addr):
        self.sock = sock
        self.addr = addr
        self.send_queue: queue.Queue = queue.Queue(maxsize=SEND_BACKLOG)
        self.alive = True

    def enqueue(self, data: bytes) -> bool:
        try:
            self.send_queue.put_nowait(data)
            return True
        except queue.Full:
            return False


class LiveServer:
    """Runs episodes with a policy and serves frames/commands on a socket."""

    def __init__(
        self,
        policy,
        run_config: RunConfig,
        bind: str = "127.0.0.1:0",
        seed: int = 0,
        rate: float = 10.0,
    ):
        self.policy = policy
        self.run_config = run_config
        self.seed = seed
        self.rate = rate
        self.speed = 1.0
        host, _, port = bind.partition(":")
        self._listener = socket.create_server((host, int(port or 0)))
        self.port = self._listener.getsockname()[1]
        self.host = self._listener.getsockname()[0]
        self._clients: list[_Client] = []
        self._clients_lock = threading.Lock()
        self._commands: queue.Queue = queue.Queue()
        self._stop = threading.Event()
        self._paused = False
        self._step_credits = 0
        self._threads: list[threading.Thread] = []
        self._manual_interventions: dict[int, Intervention] = {}
        self._episode_index = 0
        self._reset_seed = None
        self.frames_emitted = 0

    # -- lifecycle ----------------------------------------------------------

    def start(self):
        t = threading.Thread(target=self._accept_loop, daemon=True)
        t.start()
        self._threads.append(t)
        sim = threading.Thread(target=self._sim_loop, daemon=True)
        sim.start()
        self._threads.append(sim)
        return self

    def stop(self):
        self._stop.set()
        try:
            self._listener.close()
        except OSError:
            pass
        with self._clients_lock:
            clients = list(self._clients)
        for client in clients:
            self._drop_client(client)
        for t in self._threads:
            t.join(timeout=2.0)

    def serve_forever(self):
        self.start()
        try:
            while not self._stop.is_set():
                time.sleep(0.2)
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    # -- client IO ----------------------------------------------------------

    def _hello(self) -> dict:
        """Session metadata sent to every client on connect."""
        import dataclasses

        schema = self.policy.config.schema
        return {
            "type": "hello",
            "env": dataclasses.asdict(self.run_config.env),
            "schema": schema.to_json() if schema is not None else None,
            "n_per_team": self.run_config.env.n_per_team,
            "rate": self.rate,
        }

    def _accept_loop(self):
        while not self._stop.is_set():
            try:
                sock, addr = self._listener.accept()
            except OSError:
                return
            client = _Client(sock, addr)
            client.enqueue(encode_message(self._hello()))
            with self._clients_lock:
                self._clients.append(client)
            threading.Thread(target=self._reader_loop, args=(client,), daemon=True).start()
            threading.Thread(target=self._writer_loop, args=(client,), daemon=True).start()

    def _reader_loop(self, client: _Client):
        decoder = MessageDecoder()
        while client.alive and not self._stop.is_set():
            try:
                data = client.sock.recv(4096)
            except OSError:
                break
            if not data:
                break
            try:
                for message in decoder.feed(data):
                    self._commands.put((client, message))
            except (ValueError, UnicodeDecodeError) as err:
                client.enqueue(encode_message({"type": "error", "message": str(err)}))
                break
        self._drop_client(client)

    def _writer_loop(self, client: _Client):
        while client.alive:
            try:
                data = client.send_queue.get(timeout=0.2)
            except queue.Empty:
                if self._stop.is_set():
                    return
                continue
            try:
                client.sock.sendall(data)
            except OSError:
                self._drop_client(client)
                return

    def _drop_client(self, client: _Client):
        client.alive = False
        try:
            client.sock.close()
        except OSError:
            pass
        with self._clients_lock:
            if client in self._clients:
                self._clients.remove(client)

    def _broadcast(self, frame: dict):
        data = encode_message(frame)
        with self._clients_lock:
            clients = list(self._clients)
        for client in clients:
            if not client.enqueue(data):
                self._drop_client(client)  # bounded backlog: drop slow clients
        self.frames_emitted += 1

    # -- commands -----------------------------------------------------------

    def _ack(self, client: _Client, message: dict, effective_step: int):
        client.enqueue(
            encode_message(
                {
                    "type": "ack",
                    "cmd": message.get("cmd"),
                    "id": message.get("id"),
                    "effective_step": effective_step,
                }
            )
        )

    def _error(self, client: _Client, message: dict, err: str):
        client.enqueue(
            encode_message({"type": "error", "id": message.get("id"), "message": err})
        )

    def _drain_commands(self, next_step: int) -> bool:
        """Apply queued commands; returns True if the episode must reset."""
        reset = False
        while True:
            try:
                client, message = self._commands.get_nowait()
            except queue.Empty:
                return reset
            try:
                cmd = message.get("cmd")
                if cmd == "pause":
                    self._paused = True
                elif cmd == "resume":
                    self._paused = False
                    self._step_credits = 0
                elif cmd == "step_once":
                    self._step_credits += 1
                elif cmd == "set_speed":
                    factor = float(message["factor"])
                    if factor <= 0:
                        raise ValueError("speed factor must be positive")
                    self.speed = factor
                elif cmd == "set_intervention":
                    agent = int(message["agent"])
                    if agent not in set(defender_indices(self.run_config.env)):
                        raise ValueError(f"agent {agent} is not a defender")
                    schema = self.policy.config.schema
                    if schema is None:
                        raise ValueError("model has no concept layer")
                    iv = Intervention(
                        mask=np.asarray(message["mask"], dtype=bool),
                        values=np.asarray(message["values"], dtype=np.float64),
                        provenance="manual",
                    )
                    iv.validate(schema)
                    self._manual_interventions[agent] = iv
                elif cmd == "clear_intervention":
                    self._manual_interventions.pop(int(message["agent"]), None)
                elif cmd == "reset_episode":
                    self._reset_seed = message.get("seed")
                    reset = True
                else:
                    raise ValueError(f"unknown command {cmd!r}")
                self._ack(client, message, next_step)
            except (KeyError, ValueError, TypeError) as err:
                self._error(client, message, str(err))

    # -- simulation ---------------------------------------------------------

    def _episode_seed(self):
        if self._reset_seed is not None:
            seed = np.random.SeedSequence([int(self._reset_seed), 0])
            self._reset_seed = None
            return seed
        seed = np.random.SeedSequence([self.seed, self._episode_index])
        return seed

    def _gate(self, next_step: int, deadline: float) -> bool:
        """Block until the next frame may be produced; True requests a reset."""
        while not self._stop.is_set():
            if self._drain_commands(next_step=next_step):
                return True
            if self._paused:
                if self._step_credits > 0:
                    self._step_credits -= 1
                    return False
                time.sleep(0.01)
                continue
            now = time.monotonic()
            if now >= deadline:
                return False
            time.sleep(min(0.01, deadline - now))
        return False

    def _sim_loop(self):
        deadline = time.monotonic()
        while not self._stop.is_set():
            seed = self._episode_seed()
            frames = episode_frames(
                self.policy,
                self.run_config,
                seed,
                mode="greedy",
                manual_interventions=self._manual_interventions,
                episode_id=self._episode_index,
            )
            self._episode_index += 1
            next_t = 0
            while not self._stop.is_set():
                if self._gate(next_t, deadline):
                    break  # reset requested: abandon this episode
                if self._stop.is_set():
                    return
                try:
                    frame = next(frames)
                except StopIteration:
                    break
                self._broadcast(frame)
                next_t = frame["t"] + 1
                deadline = time.monotonic() + 1.0 / (self.rate * self.speed)


def replay(log_path, bind: str | None = None, speed: float = 1.0, rate: float = 10.0, out=None):
    """Re-emit recorded frames at the requested speed.

    With ``bind`` the frames are served to socket clients; otherwise they
    are written as NDJSON to ``out`` (default stdout). No policy runs.
    """
    import json
    import sys

    frames = list(read_frames(log_path))
    period = 1.0 / (rate * speed)

    def paced(emit):
        start = time.monotonic()
        for i, frame in enumerate(frames):
            emit(frame)
            deadline = start + (i + 1) * period
            if i + 1 < len(frames):
                delay = deadline - time.monotonic()
                if delay > 0:
                    time.sleep(delay)

    if bind is None:
        out = out or sys.stdout
        paced(lambda frame: out.write(json.dumps(frame, sort_keys=True) + "\n"))
        return len(frames)
    host, _, port = bind.partition(":")
    listener = socket.create_server((host, int(port or 0)))
    sock, _ = listener.accept()
    try:
        paced(lambda frame: sock.sendall(encode_message(frame)))
    finally:
        sock.close()
        listener.close()
    return len(frames)

/**
 * TCP console client: decodes the server stream into ordered messages and
 * sends commands. All state lives in the caller's ViewModel.
 */

import * as net from "node:net";

import { Command, MessageDecoder, ServerMessage, encodeMessage } from "./protocol.js";

export interface ClientEvents {
  onMessage: (msg: ServerMessage) => void;
  onClose?: () => void;
  onError?: (err: Error) => void;
}

export class ConsoleClient {
  private socket: net.Socket | null = null;
  private decoder = new MessageDecoder();

  constructor(
    readonly host: string,
    readonly port: number,
    private events: ClientEvents,
  ) {}

  connect(): Promise<void> {
    return new Promise((resolve, reject) => {
      const socket = net.createConnection({ host: this.host, port: this.port });
      socket.once("connect", () => {
        this.socket = socket;
        resolve();
      });
      socket.once("error", (err) => {
        if (this.socket === null) reject(err);
        else this.events.onError?.(err);
      });
      socket.on("data", (data) => {
        let messages: ServerMessage[];
        try {
          messages = this.decoder.feed(data);
        } catch (err) {
          this.events.onError?.(err as Error);
          socket.destroy();
          return;
        }
        for (const msg of messages) this.events.onMessage(msg);
      });
      socket.on("close", () => {
        this.socket = null;
        this.events.onClose?.();
      });
    });
  }

  send(command: Command): void {
    if (!this.socket) throw new Error("not connected");
    this.socket.write(encodeMessage(command));
  }

  close(): void {
    this.socket?.destroy();
    this.socket = null;
  }
}

/**
 * Incremental parser for the service's event stream. The wire format is
 * minimal SSE: each message is one `data: <json>` line followed by a blank
 * line. Chunks may split messages anywhere, so the parser buffers.
 */

export interface StreamEventMessage {
  seq: number;
  event: { ts: number; kind: string; payload: Record<string, unknown> };
}

export interface StreamSnapshotMessage {
  snapshot: {
    state: string;
    graph: Record<string, unknown>;
    world: Record<string, unknown>;
  };
}

export type StreamMessage = StreamEventMessage | StreamSnapshotMessage;

export function isSnapshot(msg: StreamMessage): msg is StreamSnapshotMessage {
  return "snapshot" in msg;
}

export class SseParser {
  private buffer = "";

  /** Feed a raw chunk; returns every message completed by it. */
  push(chunk: string): StreamMessage[] {
    this.buffer += chunk;
    const out: StreamMessage[] = [];
    for (;;) {
      const split = this.buffer.indexOf("\n\n");
      if (split < 0) break;
      const block = this.buffer.slice(0, split);
      this.buffer = this.buffer.slice(split + 2);
      for (const line of block.split("\n")) {
        if (line.startsWith("data: ")) {
          out.push(JSON.parse(line.slice("data: ".length)) as StreamMessage);
        }
      }
    }
    return out;
  }

  /** Anything buffered but not yet terminated by a blank line. */
  pending(): boolean {
    return this.buffer.length > 0;
  }
}

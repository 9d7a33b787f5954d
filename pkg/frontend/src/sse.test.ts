import { describe, expect, it } from "vitest";

import { SseParser, isSnapshot } from "./sse.js";
import type { StreamEventMessage } from "./sse.js";

const EVENT = 'data: {"seq": 2, "event": {"ts": 2, "kind": "tool_call", "payload": {"name": "pick_object"}}}\n\n';
const SNAPSHOT = 'data: {"snapshot": {"state": "Done", "graph": {}, "world": {"objects": {}}}}\n\n';

describe("SseParser", () => {
  it("parses a complete message", () => {
    const parser = new SseParser();
    const out = parser.push(EVENT);
    expect(out).toHaveLength(1);
    const msg = out[0]! as StreamEventMessage;
    expect(msg.seq).toBe(2);
    expect(msg.event.kind).toBe("tool_call");
    expect(parser.pending()).toBe(false);
  });

  it("buffers messages split anywhere, including mid-JSON", () => {
    const parser = new SseParser();
    const cut = EVENT.indexOf("tool_call");
    expect(parser.push(EVENT.slice(0, cut))).toHaveLength(0);
    expect(parser.pending()).toBe(true);
    const out = parser.push(EVENT.slice(cut));
    expect(out).toHaveLength(1);
  });

  it("handles several messages in one chunk and trailing partials", () => {
    const parser = new SseParser();
    const out = parser.push(EVENT + SNAPSHOT + "data: {\"seq\"");
    expect(out).toHaveLength(2);
    expect(parser.pending()).toBe(true);
  });

  it("separates snapshots from trace events", () => {
    const parser = new SseParser();
    const [event, snapshot] = parser.push(EVENT + SNAPSHOT);
    expect(isSnapshot(event!)).toBe(false);
    expect(isSnapshot(snapshot!)).toBe(true);
    if (isSnapshot(snapshot!)) {
      expect(snapshot.snapshot.state).toBe("Done");
    }
  });

  it("ignores blank keep-alive blocks", () => {
    const parser = new SseParser();
    expect(parser.push("\n\n\n\n")).toHaveLength(0);
  });
});

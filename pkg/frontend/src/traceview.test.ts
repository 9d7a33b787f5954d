import { describe, expect, it } from "vitest";

import type { TraceEvent } from "./api.js";
import {
  TraceWalker,
  decisionOf,
  describeEvent,
  isFailure,
  parseNdjson,
} from "./traceview.js";

function event(ts: number, kind: string, payload: Record<string, unknown>): TraceEvent {
  return { ts, kind, payload };
}

describe("describeEvent", () => {
  it("summarizes user and assistant text", () => {
    expect(describeEvent(event(0, "user_msg", { text: "Move the puck." })))
      .toBe("user: Move the puck.");
    expect(describeEvent(event(1, "assistant_msg", { text: "plan ready" })))
      .toBe("assistant: plan ready");
  });

  it("labels decisions, including suggestions with their options", () => {
    const suggest = event(5, "assistant_msg", {
      text: "trouble",
      decision: {
        action: "suggest",
        step: 4,
        options: ["skip", "reposition"],
        suggested: "reposition",
        object: "puck",
      },
    });
    expect(describeEvent(suggest)).toBe(
      "assistant suggests reposition for step 4 (options: skip/reposition)",
    );
    const skip = event(6, "user_msg", {
      text: "Skip step 4.",
      decision: { action: "skip", step: 4 },
    });
    expect(describeEvent(skip)).toBe("user decision: skip");
  });

  it("renders tool calls with compact args and results by outcome", () => {
    const call = event(2, "tool_call", {
      id: "step-3",
      name: "pick_object",
      args: { object_name: "puck" },
    });
    expect(describeEvent(call)).toBe(
      'call pick_object(object_name="puck") [step-3]',
    );
    expect(
      describeEvent(event(3, "tool_result", { ok: true, payload: { picked: "puck" } })),
    ).toBe('ok {"picked":"puck"}');
    expect(
      describeEvent(
        event(4, "tool_result", {
          ok: false,
          failure_kind: "grasp",
          failure_reason: "grasp missed: the object slipped",
        }),
      ),
    ).toBe("FAIL (grasp) grasp missed: the object slipped");
  });

  it("renders state changes and graph deltas", () => {
    expect(
      describeEvent(event(7, "state_change", { from: "Executing", to: "Done" })),
    ).toBe("state Executing -> Done");
    expect(
      describeEvent(
        event(8, "state_change", { from: "Planning", to: "Failed", excluded: true }),
      ),
    ).toBe("state Planning -> Failed (excluded)");
    expect(
      describeEvent(
        event(9, "graph_delta", {
          added: ["spot"],
          removed: [],
          attribute_changes: [{ node: "puck", attribute: "coordinates" }],
          reparented: [],
        }),
      ),
    ).toBe("graph: +spot; 1 attr change(s)");
  });
});

describe("decisionOf / isFailure", () => {
  it("extracts decisions and flags failed tool results only", () => {
    expect(decisionOf(event(0, "user_msg", { text: "hi" }))).toBeNull();
    expect(
      decisionOf(event(1, "user_msg", { decision: { action: "retry" } }))?.action,
    ).toBe("retry");
    expect(isFailure(event(2, "tool_result", { ok: false }))).toBe(true);
    expect(isFailure(event(3, "tool_result", { ok: true }))).toBe(false);
    expect(isFailure(event(4, "user_msg", { ok: false }))).toBe(false);
  });
});

describe("TraceWalker", () => {
  const events = [
    event(0, "user_msg", { text: "go" }),
    event(1, "tool_call", { id: "step-1", name: "pick_object", args: {} }),
    event(2, "tool_result", { ok: false, failure_kind: "grasp", failure_reason: "slip" }),
    event(3, "user_msg", { text: "Retry.", decision: { action: "retry", step: 1 } }),
    event(4, "tool_result", { ok: true, payload: {} }),
  ];

  it("steps forward and backward with clamping", () => {
    const walker = new TraceWalker(events);
    expect(walker.visible()).toEqual([]);
    expect(walker.current()).toBeNull();
    expect(walker.next()!.ts).toBe(0);
    expect(walker.next()!.ts).toBe(1);
    expect(walker.visible()).toHaveLength(2);
    expect(walker.prev()!.ts).toBe(0);
    walker.prev();
    expect(walker.prev()).toBeNull(); // already at the start
    walker.seek(99);
    expect(walker.atEnd()).toBe(true);
    expect(walker.next()).toBeNull();
    walker.seek(-5);
    expect(walker.position).toBe(0);
  });

  it("jumps to the next failure or decision", () => {
    const walker = new TraceWalker(events);
    expect(walker.nextMark()!.ts).toBe(2); // the failed result
    expect(walker.nextMark()!.ts).toBe(3); // the retry decision
    expect(walker.nextMark()).toBeNull(); // nothing after that
    expect(walker.atEnd()).toBe(true);
  });
});

describe("parseNdjson", () => {
  it("parses one event per line and tolerates blank lines", () => {
    const text =
      '{"ts": 0, "kind": "user_msg", "payload": {"text": "hi"}}\n' +
      "\n" +
      '{"ts": 1, "kind": "state_change", "payload": {"from": "a", "to": "b"}}\n';
    const events = parseNdjson(text);
    expect(events).toHaveLength(2);
    expect(events[1]!.kind).toBe("state_change");
  });

  it("reports the offending line for malformed input", () => {
    expect(() => parseNdjson('{"ts": 0')).toThrow("line 1: not valid JSON");
    expect(() =>
      parseNdjson('{"ts": 0, "kind": "user_msg", "payload": {}}\n{"no": 1}'),
    ).toThrow("line 2: not a trace event");
  });
});

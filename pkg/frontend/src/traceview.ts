/**
 * Trace presentation: one-line summaries per event plus a step-through
 * walker used by the replay view. Works on live pages from
 * `GET .../trace` and on pasted NDJSON files alike.
 */

import type { TraceEvent } from "./api.js";

export interface Decision {
  action: string;
  step?: number;
  object?: string;
  options?: string[];
  suggested?: string;
  position?: number[];
  attempt?: number;
}

export function decisionOf(event: TraceEvent): Decision | null {
  const decision = event.payload["decision"];
  if (decision && typeof decision === "object") return decision as Decision;
  return null;
}

function short(value: unknown): string {
  const text = JSON.stringify(value);
  if (text === undefined) return "";
  return text.length > 60 ? `${text.slice(0, 57)}...` : text;
}

function describeArgs(args: Record<string, unknown>): string {
  return Object.entries(args)
    .map(([key, value]) => `${key}=${short(value)}`)
    .join(", ");
}

export function describeEvent(event: TraceEvent): string {
  const p = event.payload;
  switch (event.kind) {
    case "user_msg": {
      const decision = decisionOf(event);
      const text = typeof p["text"] === "string" ? (p["text"] as string) : "";
      return decision
        ? `user decision: ${decision.action}${decision.object ? ` ${decision.object}` : ""}`
        : `user: ${text}`;
    }
    case "assistant_msg": {
      const decision = decisionOf(event);
      const text = typeof p["text"] === "string" ? (p["text"] as string) : "";
      if (decision && decision.action === "suggest") {
        return `assistant suggests ${decision.suggested ?? "?"} for step ${decision.step ?? "?"} (options: ${(decision.options ?? []).join("/")})`;
      }
      return `assistant: ${text}`;
    }
    case "tool_call": {
      const args = (p["args"] ?? {}) as Record<string, unknown>;
      return `call ${String(p["name"])}(${describeArgs(args)}) [${String(p["id"])}]`;
    }
    case "tool_result": {
      if (p["ok"]) return `ok ${short(p["payload"])}`;
      return `FAIL (${String(p["failure_kind"])}) ${String(p["failure_reason"])}`;
    }
    case "state_change":
      return `state ${String(p["from"])} -> ${String(p["to"])}${p["excluded"] ? " (excluded)" : ""}`;
    case "graph_delta": {
      const added = (p["added"] as unknown[] | undefined) ?? [];
      const removed = (p["removed"] as unknown[] | undefined) ?? [];
      const changed = (p["attribute_changes"] as unknown[] | undefined) ?? [];
      const reparented = (p["reparented"] as unknown[] | undefined) ?? [];
      const bits: string[] = [];
      if (added.length) bits.push(`+${added.join(", +")}`);
      if (removed.length) bits.push(`-${removed.join(", -")}`);
      if (changed.length) bits.push(`${changed.length} attr change(s)`);
      if (reparented.length) bits.push(`${reparented.length} reparent(s)`);
      return `graph: ${bits.join("; ") || "no visible change"}`;
    }
    default:
      return `${event.kind} ${short(p)}`;
  }
}

export function isFailure(event: TraceEvent): boolean {
  return event.kind === "tool_result" && !event.payload["ok"];
}

/**
 * Cursor over a recorded trace. `index` is the count of visible events, so
 * 0 shows nothing and `events.length` shows everything.
 */
export class TraceWalker {
  private index = 0;

  constructor(readonly events: TraceEvent[]) {}

  get position(): number {
    return this.index;
  }

  visible(): TraceEvent[] {
    return this.events.slice(0, this.index);
  }

  current(): TraceEvent | null {
    return this.index > 0 ? (this.events[this.index - 1] ?? null) : null;
  }

  atEnd(): boolean {
    return this.index >= this.events.length;
  }

  next(): TraceEvent | null {
    if (this.atEnd()) return null;
    this.index += 1;
    return this.current();
  }

  prev(): TraceEvent | null {
    if (this.index > 0) this.index -= 1;
    return this.current();
  }

  seek(position: number): void {
    this.index = Math.max(0, Math.min(position, this.events.length));
  }

  /** Jump forward to the next failure or decision; returns it or null. */
  nextMark(): TraceEvent | null {
    for (let i = this.index; i < this.events.length; i += 1) {
      const event = this.events[i]!;
      if (isFailure(event) || decisionOf(event) !== null) {
        this.index = i + 1;
        return event;
      }
    }
    this.index = this.events.length;
    return null;
  }
}

/** Parse an NDJSON trace file into events, rejecting malformed lines. */
export function parseNdjson(text: string): TraceEvent[] {
  const events: TraceEvent[] = [];
  const lines = text.split("\n");
  for (let i = 0; i < lines.length; i += 1) {
    const line = lines[i]!.trim();
    if (!line) continue;
    let parsed: unknown;
    try {
      parsed = JSON.parse(line);
    } catch {
      throw new Error(`line ${i + 1}: not valid JSON`);
    }
    const event = parsed as Partial<TraceEvent>;
    if (
      typeof event.ts !== "number" ||
      typeof event.kind !== "string" ||
      typeof event.payload !== "object" ||
      event.payload === null
    ) {
      throw new Error(`line ${i + 1}: not a trace event`);
    }
    events.push(event as TraceEvent);
  }
  return events;
}

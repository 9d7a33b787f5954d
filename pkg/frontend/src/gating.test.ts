import { describe, expect, it } from "vitest";

import { SESSION_STATES, controlsFor, isSessionState, stateTone } from "./gating.js";

describe("controlsFor", () => {
  it("enables the message box only while awaiting a request", () => {
    for (const state of SESSION_STATES) {
      expect(controlsFor(state).message).toBe(state === "AwaitRequest");
    }
  });

  it("enables confirm/decline only while a plan awaits confirmation", () => {
    for (const state of SESSION_STATES) {
      expect(controlsFor(state).confirm).toBe(state === "AwaitConfirmation");
    }
  });

  it("enables interventions only while the session waits for one", () => {
    for (const state of SESSION_STATES) {
      expect(controlsFor(state).intervention).toBe(
        state === "AwaitUserIntervention",
      );
    }
  });

  it("marks exactly Done and Failed as terminal", () => {
    const terminal = SESSION_STATES.filter((s) => controlsFor(s).terminal);
    expect(terminal).toEqual(["Done", "Failed"]);
  });

  it("never offers two mutually exclusive inputs at once", () => {
    for (const state of SESSION_STATES) {
      const controls = controlsFor(state);
      const active = [controls.message, controls.confirm, controls.intervention];
      expect(active.filter(Boolean).length).toBeLessThanOrEqual(1);
    }
  });
});

describe("isSessionState", () => {
  it("accepts every service state and rejects others", () => {
    for (const state of SESSION_STATES) expect(isSessionState(state)).toBe(true);
    expect(isSessionState("Paused")).toBe(false);
    expect(isSessionState("")).toBe(false);
  });
});

describe("stateTone", () => {
  it("gives waiting states an attention tone and terminal states verdicts", () => {
    expect(stateTone("AwaitConfirmation")).toBe("attention");
    expect(stateTone("AwaitUserIntervention")).toBe("attention");
    expect(stateTone("Done")).toBe("good");
    expect(stateTone("Failed")).toBe("bad");
    expect(stateTone("Planning")).toBe("busy");
    expect(stateTone("Executing")).toBe("busy");
    expect(stateTone("AwaitRequest")).toBe("idle");
  });
});

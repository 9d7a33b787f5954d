/**
 * Which controls are live in which session state. The service rejects
 * out-of-state posts with 409s anyway; this keeps the UI honest so the
 * operator is never offered a button that cannot work.
 */

export const SESSION_STATES = [
  "AwaitRequest",
  "Planning",
  "AwaitConfirmation",
  "Executing",
  "AwaitUserIntervention",
  "Done",
  "Failed",
] as const;

export type SessionState = (typeof SESSION_STATES)[number];

export interface Controls {
  /** free-text request input */
  message: boolean;
  /** accept / decline the proposed plan */
  confirm: boolean;
  /** skip / reposition / retry / abort */
  intervention: boolean;
  /** session is finished; only the trace and report remain interesting */
  terminal: boolean;
}

export function isSessionState(value: string): value is SessionState {
  return (SESSION_STATES as readonly string[]).includes(value);
}

export function controlsFor(state: SessionState): Controls {
  return {
    message: state === "AwaitRequest",
    confirm: state === "AwaitConfirmation",
    intervention: state === "AwaitUserIntervention",
    terminal: state === "Done" || state === "Failed",
  };
}

/** Badge colour class per state, used by the session list and header. */
export function stateTone(state: SessionState): "idle" | "busy" | "attention" | "good" | "bad" {
  switch (state) {
    case "AwaitRequest":
      return "idle";
    case "Planning":
    case "Executing":
      return "busy";
    case "AwaitConfirmation":
    case "AwaitUserIntervention":
      return "attention";
    case "Done":
      return "good";
    case "Failed":
      return "bad";
  }
}

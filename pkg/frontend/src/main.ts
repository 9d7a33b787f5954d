/**
 * DOM wiring for the operator console. All protocol/geometry logic lives in
 * the imported modules; this file only moves data between them and the
 * page.
 */

import { ApiError, Client } from "./api.js";
import type { SessionSummary, TraceEvent, WorldSnapshot } from "./api.js";
import { controlsFor, isSessionState, stateTone } from "./gating.js";
import type { SessionState } from "./gating.js";
import { SseParser, isSnapshot } from "./sse.js";
import {
  TraceWalker,
  decisionOf,
  describeEvent,
  isFailure,
  parseNdjson,
} from "./traceview.js";
import { sceneOps } from "./render.js";

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

const connectForm = el<HTMLFormElement>("connect-form");
const baseInput = el<HTMLInputElement>("base-url");
const tokenInput = el<HTMLInputElement>("token");
const connectStatus = el<HTMLSpanElement>("connect-status");
const sessionList = el<HTMLUListElement>("session-list");
const newSessionButton = el<HTMLButtonElement>("new-session");
const stateBadge = el<HTMLSpanElement>("state-badge");
const sessionTitle = el<HTMLHeadingElement>("session-title");
const planBox = el<HTMLPreElement>("plan-box");
const reportBox = el<HTMLPreElement>("report-box");
const messageForm = el<HTMLFormElement>("message-form");
const messageInput = el<HTMLInputElement>("message-input");
const confirmButton = el<HTMLButtonElement>("confirm");
const declineButton = el<HTMLButtonElement>("decline");
const suggestionLine = el<HTMLParagraphElement>("suggestion");
const interventionButtons = Array.from(
  document.querySelectorAll<HTMLButtonElement>("button[data-action]"),
);
const logList = el<HTMLOListElement>("event-log");
const canvas = el<HTMLCanvasElement>("table-view");
const errorBar = el<HTMLDivElement>("error-bar");

const replayText = el<HTMLTextAreaElement>("replay-text");
const replayLoad = el<HTMLButtonElement>("replay-load");
const replayFromSession = el<HTMLButtonElement>("replay-from-session");
const replayPrev = el<HTMLButtonElement>("replay-prev");
const replayNext = el<HTMLButtonElement>("replay-next");
const replayMark = el<HTMLButtonElement>("replay-mark");
const replaySlider = el<HTMLInputElement>("replay-slider");
const replayStatus = el<HTMLSpanElement>("replay-status");
const replayList = el<HTMLOListElement>("replay-log");

let client: Client | null = null;
let currentSid: string | null = null;
let streamAbort: AbortController | null = null;
let walker: TraceWalker | null = null;

function showError(err: unknown): void {
  const text =
    err instanceof ApiError
      ? `${err.code} (${err.status}): ${err.message}`
      : String(err);
  errorBar.textContent = text;
  errorBar.hidden = false;
  window.setTimeout(() => {
    errorBar.hidden = true;
  }, 6000);
}

function drawWorld(world: WorldSnapshot): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const viewport = { width: canvas.width, height: canvas.height, pad: 16 };
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.fillStyle = "#20242c";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  for (const op of sceneOps(world, viewport)) {
    ctx.beginPath();
    if (op.kind === "circle") {
      ctx.arc(op.cx, op.cy, op.r, 0, Math.PI * 2);
    } else {
      ctx.rect(op.cx - op.w / 2, op.cy - op.h / 2, op.w, op.h);
    }
    if (op.outlineOnly) {
      ctx.strokeStyle = op.color;
      ctx.lineWidth = 2;
      ctx.stroke();
    } else {
      ctx.fillStyle = op.color;
      ctx.fill();
    }
    if (op.held) {
      ctx.strokeStyle = "#ffd447";
      ctx.lineWidth = 3;
      ctx.stroke();
    }
    ctx.fillStyle = "#cfd6e4";
    ctx.font = "11px sans-serif";
    ctx.fillText(op.name, op.cx + 6, op.cy - 6);
  }
  if (world.gripper) {
    ctx.fillStyle = "#ffd447";
    ctx.fillText(`holding: ${world.gripper}`, 8, 14);
  }
}

function applyControls(state: SessionState): void {
  const controls = controlsFor(state);
  messageInput.disabled = !controls.message;
  confirmButton.disabled = !controls.confirm;
  declineButton.disabled = !controls.confirm;
  for (const button of interventionButtons) {
    button.disabled = !controls.intervention;
  }
  suggestionLine.hidden = !controls.intervention;
  stateBadge.textContent = state;
  stateBadge.dataset["tone"] = stateTone(state);
}

function showSummary(summary: SessionSummary): void {
  sessionTitle.textContent = summary.session_id;
  planBox.textContent = summary.plan ?? "(no plan yet)";
  reportBox.textContent = summary.report
    ? JSON.stringify(summary.report, null, 2)
    : "";
  if (isSessionState(summary.state)) applyControls(summary.state);
}

function appendLogLine(event: TraceEvent): void {
  const item = document.createElement("li");
  item.textContent = `${event.ts}  ${describeEvent(event)}`;
  if (isFailure(event)) item.classList.add("failure");
  const decision = decisionOf(event);
  if (decision) {
    item.classList.add("decision");
    if (decision.action === "suggest") {
      suggestionLine.textContent = describeEvent(event);
    }
  }
  logList.append(item);
  logList.scrollTop = logList.scrollHeight;
}

async function refreshSessions(): Promise<void> {
  if (!client) return;
  const sessions = await client.listSessions();
  sessionList.replaceChildren();
  for (const summary of sessions) {
    const item = document.createElement("li");
    const button = document.createElement("button");
    button.textContent = `${summary.session_id} — ${summary.state}`;
    button.addEventListener("click", () => void selectSession(summary.session_id));
    if (summary.session_id === currentSid) item.classList.add("selected");
    item.append(button);
    sessionList.append(item);
  }
}

async function refreshSelected(): Promise<void> {
  if (!client || !currentSid) return;
  try {
    showSummary(await client.getSession(currentSid));
    drawWorld(await client.world(currentSid));
    await refreshSessions();
  } catch (err) {
    showError(err);
  }
}

async function pumpStream(sid: string): Promise<void> {
  if (!client) return;
  streamAbort?.abort();
  const abort = new AbortController();
  streamAbort = abort;
  const parser = new SseParser();
  let after = 0;
  while (!abort.signal.aborted && currentSid === sid) {
    try {
      await client.streamEvents(
        sid,
        after,
        20,
        (chunk) => {
          for (const message of parser.push(chunk)) {
            if (isSnapshot(message)) {
              const state = message.snapshot.state;
              if (isSessionState(state)) applyControls(state);
              drawWorld(message.snapshot.world as unknown as WorldSnapshot);
            } else {
              appendLogLine(message.event);
              after = message.seq + 1;
            }
          }
        },
        abort.signal,
      );
    } catch (err) {
      if (abort.signal.aborted) return;
      showError(err);
      return;
    }
    // Stream closed: terminal-and-caught-up or idle timeout. Refresh the
    // summary either way; stop looping once the session is finished.
    if (currentSid !== sid || abort.signal.aborted) return;
    try {
      const summary = await client.getSession(sid);
      showSummary(summary);
      if (summary.state === "Done" || summary.state === "Failed") {
        drawWorld(await client.world(sid));
        await refreshSessions();
        return;
      }
    } catch (err) {
      showError(err);
      return;
    }
  }
}

async function selectSession(sid: string): Promise<void> {
  currentSid = sid;
  logList.replaceChildren();
  suggestionLine.textContent = "";
  await refreshSelected();
  void pumpStream(sid);
}

connectForm.addEventListener("submit", (event) => {
  event.preventDefault();
  client = new Client(baseInput.value, tokenInput.value);
  connectStatus.textContent = "connecting...";
  refreshSessions()
    .then(() => {
      connectStatus.textContent = "connected";
    })
    .catch((err) => {
      connectStatus.textContent = "failed";
      showError(err);
    });
});

newSessionButton.addEventListener("click", () => {
  if (!client) return;
  client
    .createSession()
    .then((summary) => selectSession(summary.session_id))
    .catch(showError);
});

messageForm.addEventListener("submit", (event) => {
  event.preventDefault();
  if (!client || !currentSid || !messageInput.value.trim()) return;
  client
    .sendMessage(currentSid, messageInput.value.trim())
    .then((summary) => {
      messageInput.value = "";
      showSummary(summary);
    })
    .catch(showError);
});

confirmButton.addEventListener("click", () => {
  if (!client || !currentSid) return;
  client.confirm(currentSid, true).then(showSummary).catch(showError);
});

declineButton.addEventListener("click", () => {
  if (!client || !currentSid) return;
  client.confirm(currentSid, false).then(showSummary).catch(showError);
});

for (const button of interventionButtons) {
  button.addEventListener("click", () => {
    const action = button.dataset["action"];
    if (!client || !currentSid || !action) return;
    if (
      action === "skip" ||
      action === "reposition" ||
      action === "retry" ||
      action === "abort"
    ) {
      client.intervene(currentSid, action).then(showSummary).catch(showError);
    }
  });
}

// ---------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------

function renderReplay(): void {
  if (!walker) return;
  replayList.replaceChildren();
  for (const event of walker.visible()) {
    const item = document.createElement("li");
    item.textContent = `${event.ts}  ${describeEvent(event)}`;
    if (isFailure(event)) item.classList.add("failure");
    if (decisionOf(event)) item.classList.add("decision");
    replayList.append(item);
  }
  replayList.scrollTop = replayList.scrollHeight;
  replaySlider.max = String(walker.events.length);
  replaySlider.value = String(walker.position);
  replayStatus.textContent = `${walker.position} / ${walker.events.length}`;
}

function loadReplay(events: TraceEvent[]): void {
  walker = new TraceWalker(events);
  walker.seek(events.length);
  renderReplay();
}

replayLoad.addEventListener("click", () => {
  try {
    loadReplay(parseNdjson(replayText.value));
  } catch (err) {
    showError(err);
  }
});

replayFromSession.addEventListener("click", () => {
  if (!client || !currentSid) return;
  client
    .trace(currentSid)
    .then((page) => loadReplay(page.events))
    .catch(showError);
});

replayPrev.addEventListener("click", () => {
  walker?.prev();
  renderReplay();
});

replayNext.addEventListener("click", () => {
  walker?.next();
  renderReplay();
});

replayMark.addEventListener("click", () => {
  walker?.nextMark();
  renderReplay();
});

replaySlider.addEventListener("input", () => {
  walker?.seek(Number(replaySlider.value));
  renderReplay();
});

// DOM rendering as a pure function of the session view: the whole app
// subtree is rebuilt on every state change, so identical transcripts
// produce identical DOM.

import type { AgentMessage, MessageResponse, SessionView } from "./types";

const escapeHtml = (s: string) =>
  s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");

function renderAgentText(msg: AgentMessage): string {
  const titles = new Map(msg.annotation.items.map((i) => [i.id, i.title]));
  return msg.text
    .split(/\s+/)
    .filter((tok) => tok.length > 0)
    .map((tok) => {
      const m = /^@(\d+)$/.exec(tok);
      if (!m) return escapeHtml(tok);
      const id = Number(m[1]);
      const title = titles.get(id) ?? tok;
      return `<span class="chip" data-item-id="${id}">${escapeHtml(title)}</span>`;
    })
    .join(" ");
}

function renderPanel(annotation: MessageResponse | null): string {
  if (!annotation) {
    return `<div class="panel-empty">no agent turn yet</div>`;
  }
  const items = annotation.items
    .map(
      (i) =>
        `<li class="panel-item" data-item-id="${i.id}">` +
        `<span class="rank">#${i.rank}</span> ${escapeHtml(i.title)} ` +
        `<span class="score">${i.score.toFixed(3)}</span></li>`,
    )
    .join("");
  const steps = annotation.gate_trace
    .map(
      (s) =>
        `<span class="gate-step${s.lambda >= 0.5 ? " gate-on" : ""}"` +
        ` data-t="${s.t}" data-item-mass="${s.item_mass}"` +
        ` data-lambda="${s.lambda}"` +
        ` style="height:${Math.max(2, Math.round(s.item_mass * 28))}px"` +
        ` title="t=${s.t} mass=${s.item_mass.toFixed(3)} gate=${s.lambda.toFixed(2)}">` +
        `</span>`,
    )
    .join("");
  return (
    `<div class="decision ${annotation.classifier_decision.toLowerCase()}">` +
    `${annotation.classifier_decision}</div>` +
    `<ul class="panel-items">${items}</ul>` +
    `<div class="gate-trace">${steps}</div>`
  );
}

export function render(root: HTMLElement, view: SessionView): void {
  const bubbles = view.messages
    .map((m) =>
      m.speaker === "user"
        ? `<div class="msg user">${escapeHtml(m.text)}</div>`
        : `<div class="msg agent">${renderAgentText(m)}</div>`,
    )
    .join("");
  const pending = view.pendingText
    ? `<div class="msg user pending">${escapeHtml(view.pendingText)}</div>` +
      `<div class="msg agent typing">...</div>`
    : "";
  const failed = view.failedText
    ? `<div class="failed">message failed` +
      `<button class="retry" type="button">retry</button></div>`
    : "";
  const lastAgent = [...view.messages]
    .reverse()
    .find((m): m is AgentMessage => m.speaker === "agent");
  root.innerHTML =
    `<div class="app">` +
    `<header><span class="title">conkd chat</span>` +
    `<span class="session-id">${view.sessionId ?? "connecting"}</span>` +
    `<button class="reset" type="button">new session</button></header>` +
    `<main><section class="messages">${bubbles}${pending}${failed}</section>` +
    `<aside class="panel">${renderPanel(lastAgent?.annotation ?? null)}</aside>` +
    `</main>` +
    `<footer><input class="input" type="text" placeholder="say something"` +
    `${view.inFlight ? " disabled" : ""} />` +
    `<button class="send" type="button"${view.inFlight ? " disabled" : ""}>` +
    `send</button></footer>` +
    (view.error ? `<div class="error">${escapeHtml(view.error)}</div>` : "") +
    `</div>`;
}

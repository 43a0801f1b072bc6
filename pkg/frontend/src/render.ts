// HTML renderers for the chat screen. Pure string templates so they are
// testable without a DOM; main.ts mounts them. Every slot value printed
// here comes verbatim from the view state, which itself mirrors the
// service snapshot.

import { ChatViewState, SlotPanelEntry } from "./viewState.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderMessages(view: ChatViewState): string {
  const items = view.messages
    .map((m) => {
      const rtt =
        m.roundTripMs !== undefined
          ? ` <span class="rtt">(${m.roundTripMs.toFixed(0)} ms)</span>`
          : "";
      const cls = m.pending ? `${m.speaker} pending` : m.speaker;
      return `<li class="${cls}">${escapeHtml(m.text)}${rtt}</li>`;
    })
    .join("\n");
  return `<ul class="messages" aria-live="polite">\n${items}\n</ul>`;
}

function slotRow(slot: SlotPanelEntry): string {
  const value =
    slot.status === "filled" ? escapeHtml(slot.rawSpan ?? "") : "&mdash;";
  const normalized =
    slot.status === "filled" && slot.normalized !== null
      ? escapeHtml(slot.normalized)
      : "&mdash;";
  return (
    `<tr data-slot="${escapeHtml(slot.id)}" class="${slot.status}">` +
    `<td>${escapeHtml(slot.name)}</td>` +
    `<td>${slot.status}</td>` +
    `<td>${value}</td>` +
    `<td>${normalized}</td></tr>`
  );
}

export function renderSlotPanel(view: ChatViewState): string {
  const rows = view.slots.map(slotRow).join("\n");
  return (
    `<table class="slot-panel"><caption>Schema progress (${view.phase})</caption>` +
    `<thead><tr><th>slot</th><th>status</th><th>value</th><th>normalized</th></tr></thead>` +
    `<tbody>\n${rows}\n</tbody></table>`
  );
}

// Confirmation table: one row per filled slot, "raw → normalized", each
// with a keyboard-reachable edit button mapping to the corrections payload.
export function renderConfirmationTable(view: ChatViewState): string {
  const rows = view.slots
    .filter((s) => s.status === "filled")
    .map((s) => {
      const display =
        s.normalized !== null && s.normalized !== s.rawSpan
          ? `${escapeHtml(s.rawSpan ?? "")} → ${escapeHtml(s.normalized)}`
          : escapeHtml(s.rawSpan ?? "");
      return (
        `<tr data-slot="${escapeHtml(s.id)}"><td>${escapeHtml(s.name)}</td>` +
        `<td>${display}</td>` +
        `<td><button type="button" class="edit" data-slot="${escapeHtml(s.id)}">edit</button></td></tr>`
      );
    })
    .join("\n");
  return (
    `<table class="confirmation"><caption>Please confirm</caption><tbody>\n${rows}\n</tbody></table>` +
    `<button type="button" class="confirm-yes">Confirm</button>`
  );
}

export function renderBanner(view: ChatViewState): string {
  if (view.terminated) {
    const wiki = view.wikiUrl
      ? ` <a href="${escapeHtml(view.wikiUrl)}">internal wiki</a>`
      : "";
    return `<div class="banner terminated" role="alert">Session ended (${escapeHtml(
      view.terminationReason ?? "unknown",
    )}).${wiki}</div>`;
  }
  if (view.receipt) {
    return (
      `<div class="banner receipt">Submitted to ${escapeHtml(view.receipt.handler_id)} ` +
      `(receipt ${escapeHtml(view.receipt.payload_hash.slice(0, 12))}).</div>`
    );
  }
  if (view.retryPending) {
    return `<div class="banner retry" role="alert">Message not delivered. <button type="button" class="retry">Retry</button></div>`;
  }
  return `<div class="banner phase">${escapeHtml(view.phase)}</div>`;
}

// Browser entry point: wires the session controller to the DOM. One
// in-flight request per session; the send button stays disabled until the
// service responds.

import { SessionApi } from "./api.js";
import {
  renderBanner,
  renderConfirmationTable,
  renderMessages,
  renderSlotPanel,
} from "./render.js";
import { canSend, ChatSession } from "./viewState.js";

const BASE_URL =
  new URLSearchParams(window.location.search).get("service") ??
  "http://127.0.0.1:8700";
const SCHEMA_ID =
  new URLSearchParams(window.location.search).get("schema") ?? "time_off";

function repaint(session: ChatSession): void {
  const view = session.view;
  document.getElementById("messages")!.innerHTML = renderMessages(view);
  document.getElementById("slots")!.innerHTML = renderSlotPanel(view);
  document.getElementById("banner")!.innerHTML = renderBanner(view);
  const confirmArea = document.getElementById("confirm")!;
  confirmArea.innerHTML =
    view.phase === "confirming" ? renderConfirmationTable(view) : "";
  const input = document.getElementById("input") as HTMLInputElement;
  const send = document.getElementById("send") as HTMLButtonElement;
  input.disabled = !view.inputEnabled;
  send.disabled = !canSend(view, input.value);

  confirmArea.querySelector(".confirm-yes")?.addEventListener("click", () => {
    void session.confirm("yes").then(() => repaint(session));
  });
  confirmArea.querySelectorAll("button.edit").forEach((button) => {
    button.addEventListener("click", () => {
      const slotId = (button as HTMLButtonElement).dataset.slot!;
      const value = window.prompt(`New value for ${slotId}:`);
      if (value) {
        void session
          .confirm("no", { [slotId]: value })
          .then(() => repaint(session));
      }
    });
  });
  document
    .getElementById("banner")!
    .querySelector("button.retry")
    ?.addEventListener("click", () => {
      void session.retry().then(() => repaint(session));
    });
}

async function boot(): Promise<void> {
  const api = new SessionApi(BASE_URL);
  const session = await ChatSession.create(api, SCHEMA_ID);
  repaint(session);

  const input = document.getElementById("input") as HTMLInputElement;
  const send = document.getElementById("send") as HTMLButtonElement;

  const submit = async () => {
    const text = input.value;
    if (!canSend(session.view, text)) {
      return;
    }
    input.value = "";
    repaint(session);
    await session.send(text);
    repaint(session);
    input.focus();
  };

  send.addEventListener("click", () => void submit());
  input.addEventListener("keydown", (event) => {
    if (event.key === "Enter") {
      void submit();
    }
    send.disabled = !canSend(session.view, input.value);
  });
  input.addEventListener("input", () => {
    send.disabled = !canSend(session.view, input.value);
  });
}

void boot();

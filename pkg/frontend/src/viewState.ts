// View state for the chat screen. The slot panel is a verbatim copy of the
// latest service snapshot: this module never parses, normalizes or infers
// slot values on its own. Anything shown in the UI that describes dialogue
// state must be traceable to a field of an ActionResponse.

import {
  ActionResponse,
  ApiError,
  DispatchReceipt,
  SchemaSlotInfo,
  SessionApi,
} from "./api.js";

export interface ChatMessage {
  speaker: "user" | "agent";
  text: string;
  timestamp: number;
  roundTripMs?: number;
  pending?: boolean;
}

export interface SlotPanelEntry {
  id: string;
  name: string;
  question: string;
  required: boolean;
  status: "filled" | "pending";
  rawSpan: string | null;
  normalized: string | null;
}

export interface ChatViewState {
  messages: ChatMessage[];
  slots: SlotPanelEntry[];
  phase: string;
  inputEnabled: boolean;
  busy: boolean;
  retryPending: boolean;
  terminated: boolean;
  terminationReason: string | null;
  wikiUrl: string | null;
  receipt: DispatchReceipt | null;
  lastError: string | null;
}

export function initialView(): ChatViewState {
  return {
    messages: [],
    slots: [],
    phase: "collecting",
    inputEnabled: true,
    busy: false,
    retryPending: false,
    terminated: false,
    terminationReason: null,
    wikiUrl: null,
    receipt: null,
    lastError: null,
  };
}

export function canSend(view: ChatViewState, text: string): boolean {
  return (
    text.trim().length > 0 &&
    view.inputEnabled &&
    !view.busy &&
    !view.terminated
  );
}

export function buildSlotPanel(
  schemaSlots: SchemaSlotInfo[],
  state: ActionResponse["state"],
): SlotPanelEntry[] {
  return schemaSlots.map((slot) => {
    const filled = state.filled[slot.id];
    return {
      id: slot.id,
      name: slot.name,
      question: slot.question,
      required: slot.required,
      status: filled ? "filled" : "pending",
      rawSpan: filled ? filled.raw_span : null,
      normalized: filled ? filled.normalized : null,
    };
  });
}

export function applyAction(
  view: ChatViewState,
  schemaSlots: SchemaSlotInfo[],
  response: ActionResponse,
  roundTripMs: number,
): ChatViewState {
  const messages = view.messages
    .map((m) => (m.pending ? { ...m, pending: false } : m))
    .concat([
      {
        speaker: "agent" as const,
        text: response.action.text,
        timestamp: Date.now(),
        roundTripMs,
      },
    ]);
  const terminated =
    response.terminated === true || response.action.kind === "terminated";
  const dispatched = response.action.kind === "dispatched";
  return {
    ...view,
    messages,
    slots: buildSlotPanel(schemaSlots, response.state),
    phase: response.state.phase,
    inputEnabled: !terminated && !dispatched,
    busy: false,
    retryPending: false,
    terminated,
    terminationReason: terminated ? (response.reason ?? null) : null,
    wikiUrl: terminated ? (response.wiki_url ?? null) : null,
    receipt: response.receipt ?? null,
    lastError: null,
  };
}

interface PendingSend {
  key: string;
  text: string;
  userTurnIndexBefore: number;
}

// Orchestrates one chat session: optimistic rendering, reconciliation with
// the service response, and retry without duplication. A retry first asks
// the service for its transcript; if the message already landed there the
// client reconciles from stored state instead of re-sending.
export class ChatSession {
  view: ChatViewState;
  private pendingSend: PendingSend | null = null;
  private userTurnsSent = 0;
  private nextKey = 0;

  constructor(
    private readonly api: SessionApi,
    readonly sessionId: string,
    private readonly schemaSlots: SchemaSlotInfo[],
    firstAction: ActionResponse,
  ) {
    this.view = applyAction(initialView(), schemaSlots, firstAction, 0);
  }

  static async create(
    api: SessionApi,
    schemaId: string,
    referenceDatetime?: string,
  ): Promise<ChatSession> {
    const [schemas, first] = await Promise.all([
      api.listSchemas(),
      api.createSession(schemaId, referenceDatetime),
    ]);
    const schema = schemas.schemas.find((s) => s.id === schemaId);
    if (!schema || first.session_id === undefined) {
      throw new Error(`schema '${schemaId}' not available`);
    }
    return new ChatSession(api, first.session_id, schema.slots, first);
  }

  async send(text: string): Promise<ChatViewState> {
    if (!canSend(this.view, text)) {
      return this.view;
    }
    this.pendingSend = {
      key: `turn-${this.nextKey++}`,
      text,
      userTurnIndexBefore: this.userTurnsSent,
    };
    this.view = {
      ...this.view,
      busy: true,
      messages: this.view.messages.concat([
        { speaker: "user", text, timestamp: Date.now(), pending: true },
      ]),
    };
    return this.deliver();
  }

  // Re-attempt the last failed send. Never duplicates: if the service
  // already recorded the user turn, reconcile from its state instead.
  async retry(): Promise<ChatViewState> {
    const pending = this.pendingSend;
    if (!pending || !this.view.retryPending) {
      return this.view;
    }
    const state = await this.api.getState(this.sessionId);
    const userTurns = state.turns.filter((t) => t.speaker === "user");
    if (userTurns.length > pending.userTurnIndexBefore) {
      // the send actually reached the service; pick up its last action
      const lastAgent = [...state.turns]
        .reverse()
        .find((t) => t.speaker === "agent");
      this.userTurnsSent = userTurns.length;
      this.pendingSend = null;
      this.view = {
        ...this.view,
        busy: false,
        retryPending: false,
        lastError: null,
        phase: state.state.phase,
        messages: this.view.messages
          .map((m) => (m.pending ? { ...m, pending: false } : m))
          .concat(
            lastAgent
              ? [
                  {
                    speaker: "agent" as const,
                    text: lastAgent.text,
                    timestamp: Date.now(),
                  },
                ]
              : [],
          ),
        slots: buildSlotPanel(this.schemaSlots, {
          filled: state.state.filled,
          pending: state.state.pending,
          phase: state.state.phase,
        }),
      };
      return this.view;
    }
    this.view = { ...this.view, busy: true };
    return this.deliver();
  }

  private async deliver(): Promise<ChatViewState> {
    const pending = this.pendingSend;
    if (!pending) {
      return this.view;
    }
    const started = performance.now();
    try {
      const response = await this.api.sendMessage(this.sessionId, pending.text);
      this.userTurnsSent = pending.userTurnIndexBefore + 1;
      this.pendingSend = null;
      this.view = applyAction(
        this.view,
        this.schemaSlots,
        response,
        performance.now() - started,
      );
    } catch (err) {
      if (err instanceof ApiError) {
        this.pendingSend = null;
        this.view = {
          ...this.view,
          busy: false,
          retryPending: false,
          terminated: err.status === 409 ? true : this.view.terminated,
          inputEnabled: err.status === 409 ? false : this.view.inputEnabled,
          terminationReason:
            err.status === 409 && typeof err.body.reason === "string"
              ? err.body.reason
              : this.view.terminationReason,
          wikiUrl:
            err.status === 409 && typeof err.body.wiki_url === "string"
              ? err.body.wiki_url
              : this.view.wikiUrl,
          lastError: err.message,
        };
      } else {
        // network failure: keep the optimistic message, offer a retry
        this.view = {
          ...this.view,
          busy: false,
          retryPending: true,
          lastError: "network error, retry available",
        };
      }
    }
    return this.view;
  }

  async confirm(
    decision: string,
    corrections?: Record<string, string>,
  ): Promise<ChatViewState> {
    const started = performance.now();
    const response = await this.api.confirm(
      this.sessionId,
      decision,
      corrections,
    );
    this.view = applyAction(
      this.view,
      this.schemaSlots,
      response,
      performance.now() - started,
    );
    return this.view;
  }
}

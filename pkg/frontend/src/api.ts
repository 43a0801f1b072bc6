// Typed client for the session service HTTP API. This module is the only
// place the frontend talks to the network; everything it returns is the
// service's JSON, untouched.

export interface SlotValueWire {
  raw_span: string;
  normalized: string | null;
}

export interface StateSnapshot {
  filled: Record<string, SlotValueWire>;
  pending: string[];
  phase: string;
}

export interface AgentActionWire {
  kind: string;
  text: string;
  slot_id?: string;
}

export interface DispatchReceipt {
  handler_id: string;
  payload_hash: string;
  timestamp: string;
  result: unknown;
}

export interface ActionResponse {
  action: AgentActionWire;
  state: StateSnapshot;
  session_id?: string;
  terminated?: boolean;
  reason?: string | null;
  wiki_url?: string | null;
  receipt?: DispatchReceipt;
}

export interface SchemaSlotInfo {
  id: string;
  name: string;
  question: string;
  required: boolean;
}

export interface SchemaInfo {
  id: string;
  domain: string;
  slots: SchemaSlotInfo[];
}

export interface SessionStateResponse {
  session_id: string;
  state: {
    schema_id: string;
    filled: Record<string, SlotValueWire & { source_turn?: number }>;
    pending: string[];
    phase: string;
    [key: string]: unknown;
  };
  turns: { index: number; speaker: string; text: string }[];
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: Record<string, unknown>,
  ) {
    super(typeof body.error === "string" ? body.error : `HTTP ${status}`);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(url, {
    headers: { "content-type": "application/json" },
    ...init,
  });
  const body = (await resp.json()) as Record<string, unknown>;
  if (!resp.ok) {
    throw new ApiError(resp.status, body);
  }
  return body as T;
}

export class SessionApi {
  constructor(readonly baseUrl: string) {}

  listSchemas(): Promise<{ schemas: SchemaInfo[] }> {
    return request(`${this.baseUrl}/v1/schemas`);
  }

  createSession(
    schemaId: string,
    referenceDatetime?: string,
  ): Promise<ActionResponse> {
    return request(`${this.baseUrl}/v1/sessions`, {
      method: "POST",
      body: JSON.stringify({
        schema_id: schemaId,
        reference_datetime: referenceDatetime,
      }),
    });
  }

  sendMessage(sessionId: string, text: string): Promise<ActionResponse> {
    return request(`${this.baseUrl}/v1/sessions/${sessionId}/messages`, {
      method: "POST",
      body: JSON.stringify({ text }),
    });
  }

  confirm(
    sessionId: string,
    decision: string,
    corrections?: Record<string, string>,
  ): Promise<ActionResponse> {
    return request(`${this.baseUrl}/v1/sessions/${sessionId}/confirm`, {
      method: "POST",
      body: JSON.stringify({ decision, corrections }),
    });
  }

  getState(sessionId: string): Promise<SessionStateResponse> {
    return request(`${this.baseUrl}/v1/sessions/${sessionId}/state`);
  }
}

// Wire types of the chat service HTTP API.

export interface ItemOut {
  id: number;
  title: string;
  rank: number;
  score: number;
}

export interface GateStep {
  t: number;
  item_mass: number;
  lambda: number;
}

export interface MessageResponse {
  text: string;
  items: ItemOut[];
  classifier_decision: "REC" | "GEN";
  gate_trace: GateStep[];
}

export interface TurnOut {
  speaker: "user" | "agent";
  text: string;
}

export interface SessionOut {
  session_id: string;
  history: TurnOut[];
  annotations: MessageResponse[];
}

// Client-side view model.

export interface AgentMessage {
  speaker: "agent";
  text: string;
  annotation: MessageResponse;
}

export interface UserMessage {
  speaker: "user";
  text: string;
}

export type Message = UserMessage | AgentMessage;

export interface SessionView {
  sessionId: string | null;
  messages: Message[];
  inFlight: boolean;
  pendingText: string | null; // optimistic user turn awaiting the reply
  failedText: string | null;  // last failed send, offered for retry
  error: string | null;
}

export function emptyView(): SessionView {
  return {
    sessionId: null,
    messages: [],
    inFlight: false,
    pendingText: null,
    failedText: null,
    error: null,
  };
}

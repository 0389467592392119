// Controller: owns the session view, talks to the API, re-renders.
// One in-flight request per session, enforced here.

import { ApiClient, type FetchLike } from "./api";
import { render } from "./render";
import { emptyView, type SessionView } from "./types";

export class ChatApp {
  readonly view: SessionView = emptyView();
  private api: ApiClient;

  constructor(
    private root: HTMLElement,
    baseUrl: string,
    fetchImpl?: FetchLike,
  ) {
    this.api = new ApiClient(baseUrl, fetchImpl);
    root.addEventListener("click", (ev) => this.onClick(ev));
    root.addEventListener("keydown", (ev) => {
      if (ev instanceof KeyboardEvent && ev.key === "Enter") {
        void this.sendFromInput();
      }
    });
    this.render();
  }

  private render(): void {
    const input = this.root.querySelector<HTMLInputElement>(".input");
    const draft = input?.value ?? "";
    render(this.root, this.view);
    const fresh = this.root.querySelector<HTMLInputElement>(".input");
    if (fresh && !this.view.inFlight) {
      fresh.value = draft;
      fresh.focus();
    }
  }

  private onClick(ev: Event): void {
    const target = ev.target as HTMLElement;
    if (target.closest(".send")) void this.sendFromInput();
    else if (target.closest(".retry")) void this.retry();
    else if (target.closest(".reset")) void this.newSession();
  }

  private async sendFromInput(): Promise<void> {
    const input = this.root.querySelector<HTMLInputElement>(".input");
    const text = input?.value.trim() ?? "";
    if (text) {
      if (input) input.value = "";
      await this.send(text);
    }
  }

  async start(): Promise<void> {
    await this.newSession();
  }

  async newSession(): Promise<void> {
    const { session_id } = await this.api.createSession();
    Object.assign(this.view, emptyView(), { sessionId: session_id });
    this.render();
  }

  /** Rebuild the view from the server history (reconnect path). */
  async reconnect(sessionId: string): Promise<void> {
    const session = await this.api.getSession(sessionId);
    Object.assign(this.view, emptyView(), { sessionId });
    let agentSeen = 0;
    for (const turn of session.history) {
      if (turn.speaker === "user") {
        this.view.messages.push({ speaker: "user", text: turn.text });
      } else {
        const annotation = session.annotations[agentSeen++];
        this.view.messages.push({
          speaker: "agent",
          text: annotation?.text ?? turn.text,
          annotation: annotation ?? {
            text: turn.text, items: [], classifier_decision: "GEN",
            gate_trace: [],
          },
        });
      }
    }
    this.render();
  }

  async send(text: string): Promise<void> {
    if (this.view.inFlight || !this.view.sessionId) return;
    this.view.inFlight = true;
    this.view.pendingText = text; // optimistic user bubble
    this.view.failedText = null;
    this.view.error = null;
    this.render();
    try {
      const reply = await this.api.sendMessage(this.view.sessionId, text);
      this.view.messages.push({ speaker: "user", text });
      this.view.messages.push({
        speaker: "agent",
        text: reply.text,
        annotation: reply,
      });
    } catch (err) {
      // server history is unchanged; keep the text around for retry
      this.view.failedText = text;
      this.view.error = err instanceof Error ? err.message : String(err);
    } finally {
      this.view.inFlight = false;
      this.view.pendingText = null;
      this.render();
    }
  }

  async retry(): Promise<void> {
    const text = this.view.failedText;
    if (text) await this.send(text);
  }
}

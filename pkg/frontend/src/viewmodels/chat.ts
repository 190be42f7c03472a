/**
 * Chat surface state: disclosure first, then prompt/response bubbles.
 * Warning outcomes are kept structurally separate from answers so a warning
 * can never be rendered through the answer path.
 */

import { ApiError, GatewayClient, InstructionsDoc } from "../api.js";

export type MessageKind = "prompt" | "answer" | "warning" | "error";

export interface ChatMessage {
  kind: MessageKind;
  text: string;
  decisionRef?: string;
}

export class ChatViewModel {
  disclosure: InstructionsDoc | null = null;
  messages: ChatMessage[] = [];
  pending = false;
  gatewayAvailable = true;

  constructor(private client: GatewayClient) {}

  /** Fetch the instructions for use before anything else is shown. */
  async initialize(): Promise<void> {
    try {
      this.disclosure = await this.client.instructions();
      this.gatewayAvailable = true;
    } catch {
      this.disclosure = null;
      this.gatewayAvailable = false;
    }
  }

  get inputDisabled(): boolean {
    return !this.gatewayAvailable || this.pending;
  }

  async send(prompt: string): Promise<void> {
    if (this.inputDisabled || !prompt.trim()) {
      return;
    }
    this.messages.push({ kind: "prompt", text: prompt });
    this.pending = true;
    try {
      const payload = await this.client.chat(prompt);
      this.messages.push({
        kind: payload.outcome === "warning" ? "warning" : "answer",
        text: payload.text,
        decisionRef: payload.decision_ref,
      });
    } catch (err) {
      if (err instanceof ApiError && err.status === 0) {
        this.gatewayAvailable = false;
      }
      this.messages.push({ kind: "error", text: (err as Error).message });
    } finally {
      this.pending = false;
    }
  }

  async retryConnection(): Promise<void> {
    await this.initialize();
  }
}

/**
 * Auditor view state: technical documentation with the uncovered-requirements
 * list front and center, incidents with causal-link badges and pending
 * notification obligations, and the raw event trail by sequence range.
 */

import {
  ApiError,
  EventRecord,
  GatewayClient,
  IncidentRecord,
  TechnicalDoc,
} from "../api.js";

export class AuditViewModel {
  documentation: TechnicalDoc | null = null;
  incidents: IncidentRecord[] = [];
  pendingNotification: string[] = [];
  events: EventRecord[] = [];
  lastError = "";
  roleError = false;

  constructor(private client: GatewayClient) {}

  async load(): Promise<void> {
    try {
      this.documentation = await this.client.documentation("auditor");
      const payload = await this.client.incidents("auditor");
      this.incidents = payload.incidents;
      this.pendingNotification = payload.pending_notification;
      this.roleError = false;
      this.lastError = "";
    } catch (err) {
      this.captureError(err);
    }
  }

  async loadEvents(fromSeq: number, toSeq: number | null = null): Promise<void> {
    try {
      this.events = (await this.client.events(fromSeq, toSeq, "auditor")).events;
    } catch (err) {
      this.captureError(err);
    }
  }

  uncoveredRequirements(): string[] {
    return this.documentation?.uncovered_requirements ?? [];
  }

  pendingObligations(): IncidentRecord[] {
    return this.incidents.filter((incident) =>
      this.pendingNotification.includes(incident.id));
  }

  private captureError(err: unknown): void {
    if (err instanceof ApiError) {
      this.roleError = err.status === 403;
      this.lastError = err.message;
    } else {
      this.lastError = String(err);
    }
  }
}

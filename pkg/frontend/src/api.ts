/**
 * Typed client for the gateway HTTP API. Every value shown in the dashboard
 * comes from these responses; the client performs no detection or scoring of
 * its own.
 */

export type Role = "user" | "aisdeveloper" | "auditor" | "llmdeveloper";

export type RoleTokens = Partial<Record<Role, string>>;

export interface ChatPayload {
  outcome: "answer" | "warning";
  text: string;
  decision_ref: string;
  disclosure: string;
}

export interface DetectorSummary {
  id: string;
  kind: string;
  stage: string;
  features: string[];
  purpose: string;
  requirement_links: string[];
  threshold?: { bound: number; direction: string };
  cutoff?: number;
  keyword_count?: number;
}

export interface InstructionsDoc {
  doc_type: string;
  doc_id: string;
  system_name: string;
  registry_version: number;
  deployed_detectors: DetectorSummary[];
  metric_definitions: Record<string, string>;
  known_limitations: string[];
  requirement_trace: string[];
}

export interface DetectorRecord {
  id: string;
  kind: string;
  stage: string;
  features: string[];
  params: Record<string, unknown>;
  status: string;
  requirement_links: string[];
  purpose: string;
}

export interface RegistrySnapshotPayload {
  version: number;
  effective_from: string;
  detectors: DetectorRecord[];
  rules: string[];
}

export interface AssessmentRow {
  rank: number;
  combo_id: string;
  detector_ids: string[];
  coverage: number;
  accuracy: number;
  false_positive_rate: number;
  deployed: boolean;
}

export interface AssessmentDoc {
  doc_type: string;
  assessment_id: string;
  registry_version: number;
  window_size: number;
  deployed_combo_id: string | null;
  table: AssessmentRow[];
  recommendation: string;
  coverage_threshold?: number;
  sustained_coverage_trigger?: boolean;
  coverage_deficit?: number;
}

export interface AnomalyRecord {
  id: string;
  prompt_ref: string;
  output_ref: string;
  trigger: string[];
  status: string;
  created_at: string;
  incident_ref: string;
}

export interface IncidentRecord {
  id: string;
  anomaly_ref: string;
  severity: string;
  causal_link: string;
  notified: boolean;
  narrative: string;
  created_at: string;
}

export interface IncidentsPayload {
  incidents: IncidentRecord[];
  pending_notification: string[];
}

export interface TechnicalDoc extends InstructionsDoc {
  all_detectors: DetectorSummary[];
  rules: { id: string; stage: string; source: string; requirement_links: string[] }[];
  assessment: { status: string; latest: AssessmentDoc | null; history_length: number };
  requirement_coverage: Record<string, string[]>;
  uncovered_requirements: string[];
  event_counts: Record<string, number>;
}

export interface EventRecord {
  seq: number;
  action_id: string;
  actor: string;
  timestamp: string;
  payload_ref: string;
  registry_version: number;
  note: string;
}

export interface RegistryPutBody {
  upsert_detectors?: DetectorRecord[];
  remove_detector_ids?: string[];
  upsert_rules?: string[];
  remove_rule_ids?: string[];
  note?: string;
}

export interface RegistryPutResult {
  registry_version: number;
  detector_count: number;
  rule_count: number;
}

export interface PromoteBody {
  severity: "minor" | "serious";
  causal_link: "definite" | "reasonably_likely" | "suspected" | "none";
  narrative: string;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
    public defects: string[] = [],
  ) {
    super(message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

interface RequestOptions {
  method?: string;
  body?: unknown;
  role?: Role;
}

export class GatewayClient {
  constructor(
    private baseUrl: string,
    private tokens: RoleTokens = {},
    private fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, options: RequestOptions = {}): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    const token = options.role ? this.tokens[options.role] : undefined;
    if (token) {
      headers["Authorization"] = `Bearer ${token}`;
    }
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, {
        method: options.method ?? "GET",
        headers,
        body: options.body === undefined ? undefined : JSON.stringify(options.body),
      });
    } catch (err) {
      throw new ApiError(0, `gateway unreachable: ${String(err)}`);
    }
    const text = await response.text();
    let payload: unknown = {};
    if (text) {
      try {
        payload = JSON.parse(text);
      } catch {
        payload = { error: text };
      }
    }
    if (!response.ok) {
      const record = payload as { error?: string; defects?: string[] };
      throw new ApiError(response.status, record.error ?? `HTTP ${response.status}`,
        record.defects ?? []);
    }
    return payload as T;
  }

  chat(prompt: string, contextKey = "default", sessionId = ""): Promise<ChatPayload> {
    return this.request("/v1/chat", {
      method: "POST",
      body: { prompt, context_key: contextKey, session_id: sessionId },
      role: "user",
    });
  }

  instructions(): Promise<InstructionsDoc> {
    return this.request("/v1/instructions");
  }

  detectors(role: Role): Promise<RegistrySnapshotPayload> {
    return this.request("/admin/detectors", { role });
  }

  documentation(role: Role): Promise<TechnicalDoc> {
    return this.request("/admin/documentation", { role });
  }

  triggerAssessment(role: Role): Promise<{ assessment_id: string; registry_version: number }> {
    return this.request("/admin/assessments", { method: "POST", body: {}, role });
  }

  assessment(id: string, role: Role): Promise<AssessmentDoc> {
    return this.request(`/admin/assessments/${id}`, { role });
  }

  putRegistry(body: RegistryPutBody, role: Role): Promise<RegistryPutResult> {
    return this.request("/admin/registry", { method: "PUT", body, role });
  }

  anomalies(role: Role): Promise<{ anomalies: AnomalyRecord[] }> {
    return this.request("/admin/anomalies", { role });
  }

  promoteAnomaly(id: string, body: PromoteBody, role: Role): Promise<IncidentRecord> {
    return this.request(`/admin/anomalies/${id}/promote`, { method: "POST", body, role });
  }

  incidents(role: Role): Promise<IncidentsPayload> {
    return this.request("/admin/incidents", { role });
  }

  notifyIncident(id: string, role: Role): Promise<IncidentRecord> {
    return this.request(`/admin/incidents/${id}/notify`, { method: "POST", body: {}, role });
  }

  incidentReport(id: string, role: Role): Promise<Record<string, unknown>> {
    return this.request(`/admin/incidents/${id}/report`, { role });
  }

  events(fromSeq: number, toSeq: number | null, role: Role): Promise<{ events: EventRecord[] }> {
    const suffix = toSeq === null ? "" : `&to_seq=${toSeq}`;
    return this.request(`/admin/events?from_seq=${fromSeq}${suffix}`, { role });
  }
}

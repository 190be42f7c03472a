/**
 * Developer console state: detector table, assessment trigger + polling,
 * reconfiguration submissions, anomaly triage. All numbers displayed come
 * straight from API responses; nothing is recomputed client-side.
 */

import {
  AnomalyRecord,
  ApiError,
  AssessmentDoc,
  DetectorRecord,
  GatewayClient,
  IncidentRecord,
  PromoteBody,
  RegistryPutBody,
  RegistrySnapshotPayload,
} from "../api.js";

const sleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

export class ConsoleViewModel {
  registry: RegistrySnapshotPayload | null = null;
  assessment: AssessmentDoc | null = null;
  assessmentPending = false;
  anomalies: AnomalyRecord[] = [];
  lastIncident: IncidentRecord | null = null;
  registryVersion: number | null = null;
  defects: string[] = [];
  lastError = "";
  roleError = false;

  constructor(
    private client: GatewayClient,
    private pollIntervalMs = 250,
    private pollLimit = 40,
  ) {}

  async load(): Promise<void> {
    try {
      this.registry = await this.client.detectors("aisdeveloper");
      this.registryVersion = this.registry.version;
      this.anomalies = (await this.client.anomalies("aisdeveloper")).anomalies;
      this.roleError = false;
      this.lastError = "";
    } catch (err) {
      this.captureError(err);
    }
  }

  /** POST the trigger, then poll the assessment resource until it renders. */
  async runAssessment(): Promise<void> {
    this.assessmentPending = true;
    this.lastError = "";
    try {
      const { assessment_id } = await this.client.triggerAssessment("aisdeveloper");
      for (let attempt = 0; attempt < this.pollLimit; attempt++) {
        try {
          this.assessment = await this.client.assessment(assessment_id, "aisdeveloper");
          return;
        } catch (err) {
          if (err instanceof ApiError && err.status === 404) {
            await sleep(this.pollIntervalMs);
            continue;
          }
          throw err;
        }
      }
      this.lastError = `assessment ${assessment_id} did not become available`;
    } catch (err) {
      this.captureError(err);
    } finally {
      this.assessmentPending = false;
    }
  }

  /**
   * Client-side refusal: a submission that would strip every requirement link
   * from a detector or rule never reaches the gateway.
   */
  validateReconfiguration(body: RegistryPutBody): string[] {
    const problems: string[] = [];
    for (const spec of body.upsert_detectors ?? []) {
      if (!spec.requirement_links || spec.requirement_links.length === 0) {
        problems.push(`detector ${spec.id}: requirement links must not be emptied`);
      }
    }
    for (const rule of body.upsert_rules ?? []) {
      if (!/\bREQ\s+R\d+/.test(rule)) {
        problems.push(`rule ${rule.split(":")[0] ?? "?"}: requirement links must not be emptied`);
      }
    }
    return problems;
  }

  async submitReconfiguration(body: RegistryPutBody): Promise<boolean> {
    this.defects = [];
    this.lastError = "";
    const problems = this.validateReconfiguration(body);
    if (problems.length > 0) {
      this.defects = problems;
      return false;
    }
    try {
      const result = await this.client.putRegistry(body, "aisdeveloper");
      this.registryVersion = result.registry_version;
      await this.load();
      return true;
    } catch (err) {
      this.captureError(err);
      return false;
    }
  }

  /** Threshold edit built from the API-provided spec, not a recomputed one. */
  thresholdEdit(detectorId: string, newBound: number): RegistryPutBody | null {
    const spec = this.registry?.detectors.find((d) => d.id === detectorId);
    if (!spec) {
      return null;
    }
    const edited: DetectorRecord = {
      ...spec,
      params: { ...spec.params, bound: newBound },
    };
    return { upsert_detectors: [edited], note: `bound -> ${newBound} via console` };
  }

  statusEdit(detectorId: string, status: "deployed" | "candidate"): RegistryPutBody | null {
    const spec = this.registry?.detectors.find((d) => d.id === detectorId);
    if (!spec) {
      return null;
    }
    return { upsert_detectors: [{ ...spec, status }], note: `${detectorId} -> ${status}` };
  }

  async promoteAnomaly(anomalyId: string, body: PromoteBody): Promise<boolean> {
    try {
      this.lastIncident = await this.client.promoteAnomaly(anomalyId, body, "aisdeveloper");
      await this.load();
      return true;
    } catch (err) {
      this.captureError(err);
      return false;
    }
  }

  private captureError(err: unknown): void {
    if (err instanceof ApiError) {
      this.roleError = err.status === 403;
      this.defects = err.defects;
      this.lastError = err.message;
    } else {
      this.lastError = String(err);
    }
  }
}

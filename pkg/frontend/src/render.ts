/**
 * HTML-string renderers. Pure functions over view-model state, so the
 * rendering invariants (warning bubbles never carry answer markup, deployed
 * rows highlighted, pending-obligation banner) are directly unit-testable.
 */

import {
  AnomalyRecord,
  AssessmentDoc,
  EventRecord,
  IncidentRecord,
  InstructionsDoc,
  RegistrySnapshotPayload,
  TechnicalDoc,
} from "./api.js";
import { ChatMessage } from "./viewmodels/chat.js";

export function escapeHtml(value: unknown): string {
  return String(value)
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function renderDisclosure(doc: InstructionsDoc | null): string {
  if (!doc) {
    return `<div class="banner error">Gateway unavailable; chat is disabled.</div>`;
  }
  const limitations = doc.known_limitations
    .map((l) => `<li>${escapeHtml(l)}</li>`)
    .join("");
  const detectors = doc.deployed_detectors
    .map((d) => `<li><code>${escapeHtml(d.id)}</code> ${escapeHtml(d.purpose)}</li>`)
    .join("");
  return (
    `<section class="disclosure">` +
    `<h2>${escapeHtml(doc.system_name)}</h2>` +
    `<p>Before you start: this gateway screens prompts and responses.</p>` +
    `<h3>Active safeguards</h3><ul>${detectors || "<li>none</li>"}</ul>` +
    `<h3>Known limitations</h3><ul>${limitations}</ul>` +
    `</section>`
  );
}

export function renderChatMessage(message: ChatMessage): string {
  const ref = message.decisionRef
    ? ` <a class="decision-ref" href="#decision-${escapeHtml(message.decisionRef)}">` +
      `${escapeHtml(message.decisionRef)}</a>`
    : "";
  switch (message.kind) {
    case "prompt":
      return `<div class="bubble prompt">${escapeHtml(message.text)}</div>`;
    case "warning":
      // Warning bubbles never carry completion markup: only the gateway's
      // warning text and the decision reference.
      return (
        `<div class="bubble warning" role="alert">&#9888; ` +
        `${escapeHtml(message.text)}${ref}</div>`
      );
    case "error":
      return `<div class="bubble error">${escapeHtml(message.text)}</div>`;
    default:
      return `<div class="bubble answer">${escapeHtml(message.text)}${ref}</div>`;
  }
}

export function renderChat(messages: ChatMessage[]): string {
  return messages.map(renderChatMessage).join("\n");
}

export function renderDetectorTable(snapshot: RegistrySnapshotPayload | null): string {
  if (!snapshot) {
    return `<p class="empty">No detector data loaded.</p>`;
  }
  const rows = snapshot.detectors
    .map((d) => {
      const params = d.kind === "threshold"
        ? `bound ${escapeHtml(d.params["bound"])} (${escapeHtml(d.params["direction"])})`
        : d.kind === "logistic"
          ? `cutoff ${escapeHtml(d.params["cutoff"] ?? 0.5)}`
          : `${(d.params["keywords"] as string[] | undefined)?.length ?? 0} keywords`;
      return (
        `<tr class="${d.status}"><td>${escapeHtml(d.id)}</td>` +
        `<td>${escapeHtml(d.kind)}</td><td>${escapeHtml(d.stage)}</td>` +
        `<td>${escapeHtml(params)}</td><td>${escapeHtml(d.status)}</td>` +
        `<td>${d.requirement_links.map((r) => `<span class="req">${escapeHtml(r)}</span>`).join(" ")}</td></tr>`
      );
    })
    .join("");
  return (
    `<table class="detectors" data-version="${snapshot.version}">` +
    `<thead><tr><th>id</th><th>kind</th><th>stage</th><th>parameters</th>` +
    `<th>status</th><th>requirements</th></tr></thead><tbody>${rows}</tbody></table>`
  );
}

export function renderAssessmentTable(doc: AssessmentDoc | null): string {
  if (!doc) {
    return `<p class="empty">No assessment yet; trigger one to compare combinations.</p>`;
  }
  const rows = doc.table
    .map((row) => {
      const cls = row.deployed ? "combo deployed" : "combo";
      return (
        `<tr class="${cls}"><td>${row.rank}</td><td>${escapeHtml(row.combo_id)}</td>` +
        `<td>${row.coverage.toFixed(3)}</td><td>${row.accuracy.toFixed(3)}</td>` +
        `<td>${row.false_positive_rate.toFixed(3)}</td></tr>`
      );
    })
    .join("");
  const trigger = doc.sustained_coverage_trigger
    ? `<div class="banner warning">Deployed coverage is below the configured threshold.</div>`
    : "";
  return (
    trigger +
    `<table class="assessment" data-assessment="${escapeHtml(doc.assessment_id)}">` +
    `<thead><tr><th>rank</th><th>combination</th><th>coverage</th>` +
    `<th>accuracy</th><th>FPR</th></tr></thead><tbody>${rows}</tbody></table>` +
    `<p class="recommendation">Recommendation: ${escapeHtml(doc.recommendation)}</p>`
  );
}

export function renderAnomalyList(anomalies: AnomalyRecord[]): string {
  if (anomalies.length === 0) {
    return `<p class="empty">No anomalies recorded.</p>`;
  }
  const rows = anomalies
    .map((a) =>
      `<tr class="anomaly ${a.status}"><td>${escapeHtml(a.id)}</td>` +
      `<td>${escapeHtml(a.status)}</td><td>${escapeHtml(a.prompt_ref)}</td>` +
      `<td>${a.trigger.map(escapeHtml).join(", ")}</td>` +
      `<td>${a.status === "open"
        ? `<button data-promote="${escapeHtml(a.id)}">promote</button>`
        : escapeHtml(a.incident_ref)}</td></tr>`)
    .join("");
  return (
    `<table class="anomalies"><thead><tr><th>id</th><th>status</th>` +
    `<th>prompt</th><th>trigger</th><th></th></tr></thead><tbody>${rows}</tbody></table>`
  );
}

export function renderUncoveredRequirements(uncovered: string[]): string {
  if (uncovered.length === 0) {
    return `<div class="banner ok">All registry requirements are covered by complete assurance cases.</div>`;
  }
  const badges = uncovered
    .map((r) => `<span class="badge uncovered">${escapeHtml(r)}</span>`)
    .join(" ");
  return (
    `<div class="banner error uncovered-requirements">` +
    `Uncovered requirements: ${badges}</div>`
  );
}

export function renderIncidents(incidents: IncidentRecord[], pending: string[]): string {
  const banner = pending.length > 0
    ? `<div class="banner error pending-obligation">` +
      `${pending.length} serious incident(s) await stakeholder notification: ` +
      `${pending.map(escapeHtml).join(", ")}</div>`
    : "";
  if (incidents.length === 0) {
    return banner + `<p class="empty">No incidents recorded.</p>`;
  }
  const rows = incidents
    .map((i) =>
      `<tr class="incident ${i.severity}"><td>${escapeHtml(i.id)}</td>` +
      `<td>${escapeHtml(i.severity)}</td>` +
      `<td><span class="badge causal-${escapeHtml(i.causal_link)}">${escapeHtml(i.causal_link)}</span></td>` +
      `<td>${i.notified ? "notified" : "pending"}</td>` +
      `<td>${escapeHtml(i.narrative)}</td></tr>`)
    .join("");
  return (
    banner +
    `<table class="incidents"><thead><tr><th>id</th><th>severity</th>` +
    `<th>causal link</th><th>notification</th><th>narrative</th></tr></thead>` +
    `<tbody>${rows}</tbody></table>`
  );
}

export function renderEventTrail(events: EventRecord[]): string {
  const ordered = [...events].sort((a, b) => a.seq - b.seq);
  const rows = ordered
    .map((e) =>
      `<tr><td>${e.seq}</td><td>${escapeHtml(e.action_id)}</td>` +
      `<td>${escapeHtml(e.actor)}</td><td>${escapeHtml(e.payload_ref)}</td>` +
      `<td>${e.registry_version}</td><td>${escapeHtml(e.note)}</td></tr>`)
    .join("");
  return (
    `<table class="events"><thead><tr><th>seq</th><th>action</th><th>actor</th>` +
    `<th>payload</th><th>version</th><th>note</th></tr></thead><tbody>${rows}</tbody></table>`
  );
}

export function renderDocumentationSummary(doc: TechnicalDoc | null): string {
  if (!doc) {
    return `<p class="empty">Documentation not loaded.</p>`;
  }
  const assessment = doc.assessment.status === "available" && doc.assessment.latest
    ? renderAssessmentTable(doc.assessment.latest)
    : `<p class="empty">${escapeHtml(doc.assessment.status)}</p>`;
  const rules = doc.rules
    .map((r) => `<li><code>${escapeHtml(r.source)}</code></li>`)
    .join("");
  return (
    renderUncoveredRequirements(doc.uncovered_requirements) +
    `<section><h3>Rules</h3><ul>${rules}</ul></section>` +
    `<section><h3>Latest assessment</h3>${assessment}</section>`
  );
}

/**
 * DOM wiring: hash-routed single page with the three role views.
 * All state lives in the view models; this file only moves strings around.
 */

import { GatewayClient, RoleTokens } from "./api.js";
import {
  renderAnomalyList,
  renderAssessmentTable,
  renderChat,
  renderDetectorTable,
  renderDisclosure,
  renderDocumentationSummary,
  renderEventTrail,
  renderIncidents,
} from "./render.js";
import { AuditViewModel } from "./viewmodels/audit.js";
import { ChatViewModel } from "./viewmodels/chat.js";
import { ConsoleViewModel } from "./viewmodels/console.js";

interface DashboardConfig {
  baseUrl: string;
  tokens: RoleTokens;
}

function loadConfig(): DashboardConfig {
  const stored = window.localStorage.getItem("promptgate-dashboard");
  if (stored) {
    try {
      return JSON.parse(stored) as DashboardConfig;
    } catch {
      /* fall through to defaults */
    }
  }
  return { baseUrl: "http://127.0.0.1:8080", tokens: {} };
}

function saveConfig(config: DashboardConfig): void {
  window.localStorage.setItem("promptgate-dashboard", JSON.stringify(config));
}

const config = loadConfig();
const client = new GatewayClient(config.baseUrl, config.tokens);
const chatVm = new ChatViewModel(client);
const consoleVm = new ConsoleViewModel(client);
const auditVm = new AuditViewModel(client);

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node;
}

function renderChatPage(): void {
  el("disclosure").innerHTML = renderDisclosure(chatVm.disclosure);
  el("chat-log").innerHTML = renderChat(chatVm.messages);
  const input = el("chat-input") as HTMLInputElement;
  input.disabled = chatVm.inputDisabled;
  el("chat-send").toggleAttribute("disabled", chatVm.inputDisabled);
  el("chat-retry").style.display = chatVm.gatewayAvailable ? "none" : "inline-block";
}

function renderConsolePage(): void {
  el("console-error").textContent = consoleVm.roleError
    ? "This view needs a developer token (settings below)."
    : consoleVm.lastError;
  el("console-defects").innerHTML = consoleVm.defects
    .map((d) => `<li>${d.replace(/&/g, "&amp;").replace(/</g, "&lt;")}</li>`)
    .join("");
  el("console-version").textContent =
    consoleVm.registryVersion === null ? "" : `registry version ${consoleVm.registryVersion}`;
  el("detector-table").innerHTML = renderDetectorTable(consoleVm.registry);
  el("assessment-view").innerHTML = consoleVm.assessmentPending
    ? `<p class="empty">Assessment running&hellip;</p>`
    : renderAssessmentTable(consoleVm.assessment);
  el("anomaly-list").innerHTML = renderAnomalyList(consoleVm.anomalies);
}

function renderAuditPage(): void {
  el("audit-error").textContent = auditVm.roleError
    ? "This view needs an auditor token (settings below)."
    : auditVm.lastError;
  el("documentation").innerHTML = renderDocumentationSummary(auditVm.documentation);
  el("incident-list").innerHTML = renderIncidents(auditVm.incidents, auditVm.pendingNotification);
  el("event-trail").innerHTML = renderEventTrail(auditVm.events);
}

function showPage(page: string): void {
  for (const name of ["chat", "console", "audit", "settings"]) {
    el(`page-${name}`).style.display = name === page ? "block" : "none";
  }
}

async function route(): Promise<void> {
  const hash = window.location.hash || "#/chat";
  if (hash.startsWith("#/console")) {
    showPage("console");
    await consoleVm.load();
    renderConsolePage();
  } else if (hash.startsWith("#/audit")) {
    showPage("audit");
    await auditVm.load();
    await auditVm.loadEvents(1);
    renderAuditPage();
  } else if (hash.startsWith("#/settings")) {
    showPage("settings");
  } else {
    showPage("chat");
    if (!chatVm.disclosure) {
      await chatVm.initialize();
    }
    renderChatPage();
  }
}

function wire(): void {
  window.addEventListener("hashchange", () => void route());

  el("chat-send").addEventListener("click", async () => {
    const input = el("chat-input") as HTMLInputElement;
    const prompt = input.value;
    input.value = "";
    renderChatPage();
    await chatVm.send(prompt);
    renderChatPage();
  });
  el("chat-retry").addEventListener("click", async () => {
    await chatVm.retryConnection();
    renderChatPage();
  });

  el("assessment-run").addEventListener("click", async () => {
    renderConsolePage();
    await consoleVm.runAssessment();
    renderConsolePage();
  });

  el("reconfig-submit").addEventListener("click", async () => {
    const detectorId = (el("reconfig-id") as HTMLInputElement).value.trim();
    const bound = Number((el("reconfig-bound") as HTMLInputElement).value);
    const body = consoleVm.thresholdEdit(detectorId, bound);
    if (!body) {
      consoleVm.lastError = `unknown detector ${detectorId}`;
      renderConsolePage();
      return;
    }
    await consoleVm.submitReconfiguration(body);
    renderConsolePage();
  });

  el("anomaly-list").addEventListener("click", async (event) => {
    const target = event.target as HTMLElement;
    const anomalyId = target.getAttribute("data-promote");
    if (!anomalyId) {
      return;
    }
    await consoleVm.promoteAnomaly(anomalyId, {
      severity: "serious",
      causal_link: "suspected",
      narrative: "promoted from console",
    });
    renderConsolePage();
  });

  el("events-load").addEventListener("click", async () => {
    const from = Number((el("events-from") as HTMLInputElement).value) || 1;
    await auditVm.loadEvents(from);
    renderAuditPage();
  });

  el("settings-save").addEventListener("click", () => {
    const next: DashboardConfig = {
      baseUrl: (el("settings-url") as HTMLInputElement).value || config.baseUrl,
      tokens: {
        user: (el("settings-user-token") as HTMLInputElement).value || undefined,
        aisdeveloper: (el("settings-dev-token") as HTMLInputElement).value || undefined,
        auditor: (el("settings-audit-token") as HTMLInputElement).value || undefined,
      },
    };
    saveConfig(next);
    window.location.reload();
  });
}

wire();
void route();

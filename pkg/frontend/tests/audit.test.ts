import { describe, expect, it } from "vitest";

import { GatewayClient } from "../src/api";
import {
  renderDocumentationSummary,
  renderEventTrail,
  renderIncidents,
  renderUncoveredRequirements,
} from "../src/render";
import { AuditViewModel } from "../src/viewmodels/audit";
import { TECHNICAL_DOC, mockGateway } from "./mock";

const TOKENS = { auditor: "t-audit" as const };

const SERIOUS_UNNOTIFIED = {
  id: "inc-000001", anomaly_ref: "anm-000001", severity: "serious",
  causal_link: "suspected", notified: false,
  narrative: "output keyword tripped", created_at: "2026-01-15T12:00:00+00:00",
};
const MINOR_NOTIFIED = {
  id: "inc-000002", anomaly_ref: "anm-000002", severity: "minor",
  causal_link: "none", notified: true, narrative: "",
  created_at: "2026-01-15T13:00:00+00:00",
};

function auditVm(routes: Parameters<typeof mockGateway>[0] = {}) {
  const gateway = mockGateway({
    "GET /admin/documentation": TECHNICAL_DOC,
    "GET /admin/incidents": {
      incidents: [SERIOUS_UNNOTIFIED, MINOR_NOTIFIED],
      pending_notification: ["inc-000001"],
    },
    "GET /admin/events": {
      events: [
        { seq: 2, action_id: "A2", actor: "system", timestamp: "t", payload_ref: "req-1", registry_version: 1, note: "" },
        { seq: 1, action_id: "A1", actor: "user", timestamp: "t", payload_ref: "req-1", registry_version: 1, note: "" },
      ],
    },
    ...routes,
  });
  return { gateway, vm: new AuditViewModel(new GatewayClient("http://gw", TOKENS, gateway.fetchFn)) };
}

describe("audit page", () => {
  it("surfaces uncovered requirements prominently", async () => {
    const { vm } = auditVm();
    await vm.load();
    expect(vm.uncoveredRequirements()).toContain("R9");
    const html = renderUncoveredRequirements(vm.uncoveredRequirements());
    expect(html).toContain("uncovered-requirements");
    expect(html).toContain('<span class="badge uncovered">R9</span>');
    expect(renderDocumentationSummary(vm.documentation)).toContain("R9");
  });

  it("shows a pending-obligation banner for serious unnotified incidents", async () => {
    const { vm } = auditVm();
    await vm.load();
    const pending = vm.pendingObligations();
    expect(pending.map((i) => i.id)).toEqual(["inc-000001"]);
    const html = renderIncidents(vm.incidents, vm.pendingNotification);
    expect(html).toContain("pending-obligation");
    expect(html).toContain("inc-000001");
    expect(html).toContain("causal-suspected");
  });

  it("renders the event trail ordered by sequence number", async () => {
    const { vm } = auditVm();
    await vm.load();
    await vm.loadEvents(1);
    const html = renderEventTrail(vm.events);
    expect(html.indexOf("A1")).toBeLessThan(html.indexOf("A2"));
  });

  it("keeps the documentation's assessment table with deployed highlight", async () => {
    const { vm } = auditVm();
    await vm.load();
    const html = renderDocumentationSummary(vm.documentation);
    expect(html).toContain("combo deployed");
    expect(html).toContain("block_gibberish");
  });

  it("flags a role error on 403", async () => {
    const { vm } = auditVm({
      "GET /admin/documentation": () => ({ status: 403, body: { error: "nope" } }),
    });
    await vm.load();
    expect(vm.roleError).toBe(true);
  });

  it("reports empty states explicitly rather than hiding sections", async () => {
    const { vm } = auditVm({
      "GET /admin/incidents": { incidents: [], pending_notification: [] },
    });
    await vm.load();
    const html = renderIncidents(vm.incidents, vm.pendingNotification);
    expect(html).toContain("No incidents recorded");
    expect(html).not.toContain("pending-obligation");
  });
});

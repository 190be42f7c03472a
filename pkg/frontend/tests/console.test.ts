import { describe, expect, it } from "vitest";

import { GatewayClient, RegistryPutBody } from "../src/api";
import { renderAssessmentTable, renderDetectorTable } from "../src/render";
import { ConsoleViewModel } from "../src/viewmodels/console";
import { ASSESSMENT_DOC, DETECTORS_PAYLOAD, mockGateway } from "./mock";

const TOKENS = { aisdeveloper: "t-dev" as const };

function consoleVm(routes: Parameters<typeof mockGateway>[0]) {
  const gateway = mockGateway({
    "GET /admin/detectors": DETECTORS_PAYLOAD,
    "GET /admin/anomalies": { anomalies: [] },
    ...routes,
  });
  const vm = new ConsoleViewModel(
    new GatewayClient("http://gw", TOKENS, gateway.fetchFn), 1, 5);
  return { gateway, vm };
}

describe("developer console", () => {
  it("renders the detector table straight from the API", async () => {
    const { vm } = consoleVm({});
    await vm.load();
    const html = renderDetectorTable(vm.registry);
    expect(html).toContain('data-version="1"');
    expect(html).toContain("pp_gibberish");
    expect(html).toContain("bound 28");
    expect(html).toContain("R4");
  });

  it("triggers an assessment, polls, and highlights the deployed combo", async () => {
    const { vm, gateway } = consoleVm({
      "POST /admin/assessments": { assessment_id: "asm-000001", registry_version: 1 },
      "GET /admin/assessments/asm-000001": (_init, count) =>
        count === 1 ? { status: 404, body: { error: "pending" } }
                    : { status: 200, body: ASSESSMENT_DOC },
    });
    await vm.load();
    await vm.runAssessment();
    expect(vm.assessment?.assessment_id).toBe("asm-000001");
    const polls = gateway.calls.filter((c) => c.path.includes("/admin/assessments/"));
    expect(polls.length).toBe(2);
    const html = renderAssessmentTable(vm.assessment);
    expect(html).toContain('class="combo deployed"');
    expect(html).toContain("cl_flood+pp_gibberish");
    expect(html).toContain("Recommendation: switch to pair_pp_cs+pp_gibberish");
    expect(html).toContain("below the configured threshold");
  });

  it("submits a reconfiguration and displays the incremented version", async () => {
    let version = 1;
    const { vm, gateway } = consoleVm({
      "GET /admin/detectors": () => ({ status: 200, body: { ...DETECTORS_PAYLOAD, version } }),
      "PUT /admin/registry": () => {
        version = 2;
        return { status: 200, body: { registry_version: 2, detector_count: 2, rule_count: 1 } };
      },
    });
    await vm.load();
    expect(vm.registryVersion).toBe(1);
    const body = vm.thresholdEdit("pp_gibberish", 30.0);
    expect(body).not.toBeNull();
    const accepted = await vm.submitReconfiguration(body!);
    expect(accepted).toBe(true);
    expect(vm.registryVersion).toBe(2);
    const put = gateway.calls.find((c) => c.method === "PUT");
    expect(put).toBeDefined();
    const sent = put!.body as RegistryPutBody;
    expect(sent.upsert_detectors?.[0].params["bound"]).toBe(30.0);
    // the edit reuses the API-provided spec instead of recomputing it
    expect(sent.upsert_detectors?.[0].requirement_links).toEqual(["R4", "R6"]);
  });

  it("refuses a submission that would empty requirement links", async () => {
    const { vm, gateway } = consoleVm({
      "PUT /admin/registry": { registry_version: 2, detector_count: 2, rule_count: 1 },
    });
    await vm.load();
    const body = vm.thresholdEdit("pp_gibberish", 30.0)!;
    body.upsert_detectors![0].requirement_links = [];
    const accepted = await vm.submitReconfiguration(body);
    expect(accepted).toBe(false);
    expect(vm.defects[0]).toContain("requirement links");
    expect(gateway.calls.some((c) => c.method === "PUT")).toBe(false);
  });

  it("shows server-side validation defects verbatim", async () => {
    const defects = ["detector ghost: unknown kind 'psychic'", "rule r1: references unknown detector 'ghost'"];
    const { vm } = consoleVm({
      "PUT /admin/registry": () => ({ status: 400, body: { error: "reconfiguration rejected", defects } }),
    });
    await vm.load();
    const accepted = await vm.submitReconfiguration({
      upsert_rules: ["r1: INPUT WHEN score(ghost) >= 1.0 THEN BLOCK REQ R4"],
    });
    expect(accepted).toBe(false);
    expect(vm.defects).toEqual(defects);
  });

  it("flags a role error on 403", async () => {
    const { vm } = consoleVm({
      "GET /admin/detectors": () => ({ status: 403, body: { error: "role '' may not read detector configuration" } }),
    });
    await vm.load();
    expect(vm.roleError).toBe(true);
  });

  it("promotes an anomaly and records the incident", async () => {
    const incident = {
      id: "inc-000001", anomaly_ref: "anm-000001", severity: "serious",
      causal_link: "suspected", notified: false, narrative: "n",
      created_at: "2026-01-15T12:00:00+00:00",
    };
    const { vm, gateway } = consoleVm({
      "POST /admin/anomalies/anm-000001/promote": incident,
    });
    await vm.load();
    const promoted = await vm.promoteAnomaly("anm-000001", {
      severity: "serious", causal_link: "suspected", narrative: "n",
    });
    expect(promoted).toBe(true);
    expect(vm.lastIncident?.id).toBe("inc-000001");
    const call = gateway.calls.find((c) => c.path.endsWith("/promote"));
    expect(call?.body).toMatchObject({ severity: "serious", causal_link: "suspected" });
  });
});

/** Minimal mocked gateway: a fetchFn driven by a route table, with call log. */

import { FetchLike } from "../src/api";

export type RouteHandler =
  | unknown
  | ((init?: RequestInit, callCount?: number) => { status?: number; body?: unknown });

export interface MockGateway {
  fetchFn: FetchLike;
  calls: { method: string; path: string; body?: unknown }[];
}

export function mockGateway(routes: Record<string, RouteHandler>): MockGateway {
  const calls: MockGateway["calls"] = [];
  const counts = new Map<string, number>();

  const fetchFn: FetchLike = async (url, init) => {
    const method = (init?.method ?? "GET").toUpperCase();
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const key = `${method} ${path.split("?")[0]}`;
    calls.push({
      method,
      path,
      body: init?.body ? JSON.parse(init.body as string) : undefined,
    });
    const handler = routes[key];
    if (handler === undefined) {
      return new Response(JSON.stringify({ error: `no route ${key}` }), { status: 404 });
    }
    const count = (counts.get(key) ?? 0) + 1;
    counts.set(key, count);
    if (typeof handler === "function") {
      const result = (handler as (init?: RequestInit, n?: number) => { status?: number; body?: unknown })(
        init, count);
      return new Response(JSON.stringify(result.body ?? {}), { status: result.status ?? 200 });
    }
    return new Response(JSON.stringify(handler), { status: 200 });
  };
  return { fetchFn, calls };
}

export const INSTRUCTIONS_DOC = {
  doc_type: "instructions_for_use",
  doc_id: "ifu-abc",
  system_name: "promptgate-demo",
  registry_version: 1,
  deployed_detectors: [
    {
      id: "pp_gibberish", kind: "threshold", stage: "input", features: ["pp"],
      purpose: "flags surprising prompts", requirement_links: ["R4", "R6"],
      threshold: { bound: 28.0, direction: "above" },
    },
  ],
  metric_definitions: { pp: "perplexity", cl: "context length", cs: "charset size" },
  known_limitations: ["Keyword flags use substring matching."],
  requirement_trace: ["R4", "R6", "R9"],
};

export const DETECTORS_PAYLOAD = {
  version: 1,
  effective_from: "2026-01-15T12:00:00+00:00",
  detectors: [
    {
      id: "pp_gibberish", kind: "threshold", stage: "input", features: ["pp"],
      params: { bound: 28.0, direction: "above" }, status: "deployed",
      requirement_links: ["R4", "R6"], purpose: "flags surprising prompts",
    },
    {
      id: "kw_unsafe", kind: "keyword", stage: "output", features: [],
      params: { keywords: ["detonator"] }, status: "deployed",
      requirement_links: ["R2", "R11"], purpose: "output keyword flags",
    },
  ],
  rules: ["block_gibberish: INPUT WHEN score(pp_gibberish) >= 1.0 THEN BLOCK PRIORITY 10 REQ R4,R6"],
};

export const ASSESSMENT_DOC = {
  doc_type: "assessment",
  doc_id: "asmdoc-1",
  assessment_id: "asm-000001",
  registry_version: 1,
  window_size: 28,
  deployed_combo_id: "cl_flood+pp_gibberish",
  table: [
    {
      rank: 1, combo_id: "pair_pp_cs+pp_gibberish", detector_ids: ["pair_pp_cs", "pp_gibberish"],
      coverage: 1.0, accuracy: 0.96, false_positive_rate: 0.0625, deployed: false,
    },
    {
      rank: 2, combo_id: "cl_flood+pp_gibberish", detector_ids: ["cl_flood", "pp_gibberish"],
      coverage: 0.833, accuracy: 0.93, false_positive_rate: 0.0, deployed: true,
    },
  ],
  recommendation: "switch to pair_pp_cs+pp_gibberish",
  sustained_coverage_trigger: true,
  coverage_deficit: 0.067,
};

export const TECHNICAL_DOC = {
  ...INSTRUCTIONS_DOC,
  doc_type: "technical_documentation",
  doc_id: "tdoc-abc",
  all_detectors: INSTRUCTIONS_DOC.deployed_detectors,
  rules: [{
    id: "block_gibberish", stage: "input",
    source: "block_gibberish: INPUT WHEN score(pp_gibberish) >= 1.0 THEN BLOCK PRIORITY 10 REQ R4,R6",
    requirement_links: ["R4", "R6"],
  }],
  assessment: { status: "available", latest: ASSESSMENT_DOC, history_length: 1 },
  requirement_coverage: { R4: ["c-automated"] },
  uncovered_requirements: ["R0", "R1", "R9", "R15"],
  event_counts: { A1: 10, A4: 10 },
};

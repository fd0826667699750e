import { readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

export const INFO_FILE = join(tmpdir(), "sciunit-ui-fixture-info.json");

export interface FixtureInfo {
  port: number;
  root: string;
  unit: string;
}

export function fixture(): FixtureInfo {
  return JSON.parse(readFileSync(INFO_FILE, "utf-8")) as FixtureInfo;
}

export function apiBase(): string {
  return `http://127.0.0.1:${fixture().port}`;
}

/** The pipeline fixture's well-known stage labels. */
export const STAGE_VIOLATION = "sh calc_violation.sh";
export const STAGE_MODEL = "sh gen_model.sh";
export const STAGE_HEATMAP = "sh calc_heatmap.sh";

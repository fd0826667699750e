// JSON payload shapes of the sciunit HTTP API (the single source of truth
// for graphs, plans, and repeat reports; the UI never derives them itself).

export interface SummaryNode {
  id: string;
  ntype: "process" | "file";
  kind: "plain" | "group";
  label: string;
  conceal_count: number;
  expandable: boolean;
  origin?: "similarity" | "packability";
  pid?: number;
}

export interface SummaryEdge {
  from: string;
  to: string;
  etype: "spawned" | "read" | "wrote";
  count: number;
}

export interface AnnotationRef {
  host_process_id: string;
  file_node_id: string;
  direction: "read" | "wrote";
  label: string;
}

export interface ExpansionStep {
  op: "merge" | "pack" | "annotate";
  inputs: string[];
  output: string;
  rule?: string;
}

export interface SummaryPayload {
  nodes: SummaryNode[];
  edges: SummaryEdge[];
  annotations: AnnotationRef[];
  expansion_map: ExpansionStep[];
}

export interface RepleteNode {
  id: string;
  ntype: "process" | "file";
  label: string;
  pid?: number;
  path?: string;
  version?: number;
}

export interface RepleteEdge {
  from: string;
  to: string;
  etype: "spawned" | "read" | "wrote";
  interval: [number, number] | null;
}

export interface RepletePayload {
  nodes: RepleteNode[];
  edges: RepleteEdge[];
}

export interface ExecutionRow {
  ordinal: string;
  execution_id: string;
  command: string[];
  working_dir: string;
  created_at: string;
  annotations: [string, string][];
}

export interface ExecutionsPayload {
  sciunit: string;
  annotations: [string, string][];
  executions: ExecutionRow[];
}

export interface PlanPayload {
  selected_procs: string[];
  required_procs: string[];
  dep_files: [string, string][]; // [file node id, "read" | "wrote"]
  entry_commands: string[][];
}

export interface RepeatReport {
  execution_id: string;
  backend: string;
  exit_status: number;
  paths_written: string[];
  paths_missing: string[];
  commands_run: string[][];
  outputs_matched: boolean | null;
  mismatched: string[];
}

export interface RepeatEvent {
  event: "started" | "report";
  execution_id?: string;
  selected?: string[];
  report?: RepeatReport;
}

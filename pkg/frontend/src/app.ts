// Single-page wiring: execution picker, graph canvas with expand/collapse,
// selection sidebar, plan confirmation, and live repeat reports.

import { ApiClient, ApiError } from "./api.js";
import { GraphView, ModelError } from "./model.js";
import { renderError, renderGraph } from "./render.js";
import type { PlanPayload, RepeatReport, RepletePayload } from "./types.js";

export class App {
  readonly view = new GraphView();
  private ref = "";
  private repleteCache: RepletePayload | null = null;
  private plan: PlanPayload | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient = new ApiClient(),
  ) {}

  // -- skeleton ---------------------------------------------------------

  async start(): Promise<void> {
    this.root.innerHTML = `
      <header>
        <h1>sciunit</h1>
        <select id="execution-picker"></select>
        <button id="collapse-last" disabled>Collapse last expansion</button>
      </header>
      <div id="toast" hidden></div>
      <main>
        <section id="graph-pane"></section>
        <aside id="side-pane">
          <h2>Partial repeat</h2>
          <p class="hint">Click process nodes to select them; +N badges
          expand concealed detail.</p>
          <ul id="selection-list"></ul>
          <button id="plan-button" disabled>Plan selected</button>
          <div id="plan-pane"></div>
          <div id="report-pane"></div>
        </aside>
      </main>`;
    this.el("plan-button").addEventListener("click", () => this.makePlan());
    this.el("collapse-last").addEventListener("click", () => {
      this.view.collapse();
      this.redraw();
    });
    const picker = this.el<HTMLSelectElement>("execution-picker");
    picker.addEventListener("change", () => this.loadGraph(picker.value));
    try {
      const executions = await this.api.executions();
      for (const row of executions.executions) {
        const option = document.createElement("option");
        option.value = row.ordinal;
        option.textContent =
          `${row.ordinal} ${row.execution_id.slice(0, 12)} — ` +
          row.command.join(" ");
        picker.appendChild(option);
      }
      if (executions.executions.length) {
        await this.loadGraph(executions.executions[0].ordinal);
      } else {
        renderError(this.el("graph-pane"), "this sciunit has no executions");
      }
    } catch (err) {
      renderError(this.el("graph-pane"), describe(err));
    }
  }

  private el<T extends HTMLElement = HTMLElement>(id: string): T {
    return this.root.querySelector(`#${id}`) as T;
  }

  private toast(message: string): void {
    const toast = this.el("toast");
    toast.textContent = message;
    toast.hidden = false;
    setTimeout(() => (toast.hidden = true), 4000);
  }

  // -- graph ------------------------------------------------------------

  async loadGraph(ref: string): Promise<void> {
    this.ref = ref;
    this.repleteCache = null;
    this.plan = null;
    try {
      this.view.load(await this.api.summary(ref));
      this.redraw();
    } catch (err) {
      renderError(this.el("graph-pane"), describe(err));
    }
  }

  redraw(): void {
    renderGraph(this.el("graph-pane"), this.view, {
      onSelect: (id) => {
        if (this.view.toggleSelect(id)) this.redraw();
      },
      onExpand: (id) => void this.expand(id),
      onCollapse: (owner) => {
        this.view.collapse(owner);
        this.redraw();
      },
    });
    this.el<HTMLButtonElement>("collapse-last").disabled =
      !this.view.canCollapse();
    const list = this.el("selection-list");
    list.replaceChildren();
    for (const id of [...this.view.selected].sort()) {
      const item = document.createElement("li");
      item.textContent = this.view.node(id)?.label ?? id;
      list.appendChild(item);
    }
    this.el<HTMLButtonElement>("plan-button").disabled =
      this.view.selected.size === 0;
  }

  async expand(nodeId: string): Promise<void> {
    try {
      const next = await this.api.expand(this.ref, nodeId);
      this.view.applyExpand(nodeId, next);
      this.redraw();
    } catch (err) {
      this.toast(`expand failed: ${describe(err)}`); // view unchanged
    }
  }

  // -- partial repeat ---------------------------------------------------

  private async carriedOverPaths(plan: PlanPayload): Promise<Set<string>> {
    // a read dependency that some process wrote in the replete graph was
    // produced by an excluded process: carried over from the previous run
    if (!this.repleteCache) {
      this.repleteCache = await this.api.replete(this.ref);
    }
    const written = new Set(
      this.repleteCache.edges
        .filter((e) => e.etype === "wrote")
        .map((e) => e.from),
    );
    return new Set(
      plan.dep_files
        .filter(([file, role]) => role === "read" && written.has(file))
        .map(([file]) => file),
    );
  }

  async makePlan(): Promise<void> {
    const pane = this.el("plan-pane");
    try {
      const selected = [...this.view.selected].sort();
      const plan = await this.api.plan(this.ref, selected);
      this.plan = plan;
      const carried = await this.carriedOverPaths(plan);
      pane.replaceChildren();
      const heading = document.createElement("h3");
      heading.textContent =
        `Plan: ${plan.required_procs.length} process(es), ` +
        `${plan.dep_files.length} file(s)`;
      pane.appendChild(heading);
      const files = document.createElement("ul");
      files.className = "plan-files";
      for (const [file, role] of plan.dep_files) {
        const item = document.createElement("li");
        item.dataset.file = file;
        item.textContent = `${role} ${file}`;
        if (carried.has(file)) {
          item.className = "carried-over";
          item.textContent += " (carried over from previous run)";
        }
        files.appendChild(item);
      }
      pane.appendChild(files);
      const commands = document.createElement("p");
      commands.textContent = "entry commands: " +
        plan.entry_commands.map((argv) => argv.join(" ")).join(" ; ");
      pane.appendChild(commands);
      const confirm = document.createElement("button");
      confirm.id = "confirm-repeat";
      confirm.textContent = "Confirm and repeat";
      confirm.addEventListener("click", () => void this.runRepeat());
      pane.appendChild(confirm);
    } catch (err) {
      pane.replaceChildren();
      this.toast(`plan failed: ${describe(err)}`);
    }
  }

  async runRepeat(): Promise<void> {
    const pane = this.el("report-pane");
    pane.textContent = "running…";
    const selected = this.plan ? this.plan.selected_procs : [];
    try {
      const events = await this.api.repeat(this.ref, selected, (event) => {
        if (event.event === "started") pane.textContent = "repeat started…";
      });
      const last = events[events.length - 1];
      if (!last || last.event !== "report" || !last.report) {
        throw new ModelError("stream ended without a report");
      }
      this.renderReport(last.report);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        pane.textContent = "";
        this.toast("a repeat is already running for this execution");
        return;
      }
      pane.textContent = "";
      this.toast(`repeat failed: ${describe(err)}`);
    }
  }

  renderReport(report: RepeatReport): void {
    const pane = this.el("report-pane");
    pane.replaceChildren();
    const heading = document.createElement("h3");
    heading.textContent = "Repeat report";
    pane.appendChild(heading);
    const dl = document.createElement("dl");
    dl.id = "report";
    (dl as HTMLElement).dataset.report = JSON.stringify(report);
    const row = (key: string, value: string) => {
      const dt = document.createElement("dt");
      dt.textContent = key;
      const dd = document.createElement("dd");
      dd.textContent = value;
      dl.append(dt, dd);
    };
    row("exit status", String(report.exit_status));
    row("backend", report.backend);
    row("commands", report.commands_run.map((a) => a.join(" ")).join(" ; "));
    row("paths written", report.paths_written.join(", ") || "none");
    if (report.paths_missing.length) {
      row("paths missing", report.paths_missing.join(", "));
    }
    if (report.outputs_matched !== null) {
      row("outputs match", report.outputs_matched
        ? "yes"
        : "NO: " + report.mismatched.join(", "));
    }
    pane.appendChild(dl);
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return `${err.message} (HTTP ${err.status})`;
  if (err instanceof Error) return err.message;
  return String(err);
}

export function mount(root: HTMLElement, base = ""): App {
  const app = new App(root, new ApiClient(base));
  void app.start();
  return app;
}

declare global {
  interface Window {
    sciunitApp?: App;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  window.sciunitApp = mount(document.getElementById("app")!);
}

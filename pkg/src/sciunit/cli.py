"""Git-like command surface.

Exit codes are a stable contract: 0 success, 2 not-found/usage, 3 backend
unavailable, 4 storage/corruption, 5 transport.  Every command emits a
machine-readable JSON object with ``--json``; errors then go to stderr as
JSON too.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import __version__
from .api import ApiServer, executions_payload
from .auditor import SandboxPolicy, audit, package_live, package_recorded
from .config import load_config
from .container import Sciunit, canonical_json
from .errors import InvalidArgumentError, NotFoundError, SciunitError
from .reuse import load_provenance, repeat, repeat_partial
from .summarizer import summarize

CURRENT_FILE = "CURRENT"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sciunit",
        description="capture, store, and re-execute computational experiments")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--root", help="directory holding all sciunits")
    parser.add_argument("--unit", help="sciunit name (default: the current one)")
    parser.add_argument("--config", help="config file path")
    parser.add_argument("--json", action="store_true", dest="as_json",
                        help="machine-readable output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("create", help="create a new sciunit and make it current")
    p.add_argument("name")

    p = sub.add_parser("annotate", help="attach a key/value annotation")
    p.add_argument("key")
    p.add_argument("value")

    for name, doc in (("package", "audit a command and commit a container"),
                      ("audit", "audit a command without creating a container")):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--workdir", help="working directory for the run")
        p.add_argument("--policy", default="include-data",
                       choices=["include-data", "exclude-data"])
        p.add_argument("cmd", nargs=argparse.REMAINDER,
                       help="command to run (after --)")

    p = sub.add_parser("ingest", help="package from a recorded trace")
    p.add_argument("trace", help="NDJSON trace file")
    p.add_argument("--tree", required=True,
                   help="directory mirroring the traced filesystem")
    p.add_argument("--workdir", required=True,
                   help="working directory of the traced run")
    p.add_argument("--policy", default="include-data",
                   choices=["include-data", "exclude-data"])
    p.add_argument("--command", dest="root_command",
                   help="override the root command (JSON list)")

    sub.add_parser("list", help="list executions with ordinals and ids")

    p = sub.add_parser("materialize",
                       help="rebuild a container's sandbox tree on disk "
                            "(edit it and package again for a modified repeat)")
    p.add_argument("ref")
    p.add_argument("dest")

    p = sub.add_parser("repeat", help="re-execute a container")
    p.add_argument("ref", help="execution id, prefix, or ordinal like e1")
    p.add_argument("--procs", help="comma-separated process node ids "
                                   "for a partial repeat")
    p.add_argument("--backend", default=None,
                   help="portable | redirect | auto")
    p.add_argument("--verify", action="store_true",
                   help="byte-compare outputs against the audited container")

    p = sub.add_parser("graph", help="emit or serve the provenance graph")
    p.add_argument("ref")
    view = p.add_mutually_exclusive_group()
    view.add_argument("--summary", action="store_true", default=True)
    view.add_argument("--replete", action="store_true")
    p.add_argument("--serve", action="store_true",
                   help="serve the API and web UI instead of printing")
    p.add_argument("--port", type=int, default=None)

    p = sub.add_parser("push", help="upload an execution bundle")
    p.add_argument("ref")

    p = sub.add_parser("pull", help="download and import a bundle URL")
    p.add_argument("url")

    p = sub.add_parser("deps", help="manual dependency injection")
    deps_sub = p.add_subparsers(dest="deps_command", required=True)
    d = deps_sub.add_parser("add", help="record a dependency for the next package")
    d.add_argument("path")
    d.add_argument("--role", default="read",
                   choices=["read", "written", "executed"])

    p = sub.add_parser("config", help="configuration")
    p.add_argument("config_command", choices=["show"])
    return parser


class Cli:
    def __init__(self, args):
        self.args = args
        self.config = load_config(
            args.config, overrides={"sciunit_root": args.root})
        self.root = Path(self.config.sciunit_root)

    # -- helpers ----------------------------------------------------------

    def current_unit_name(self) -> str:
        if self.args.unit:
            return self.args.unit
        current = self.root / CURRENT_FILE
        if current.is_file():
            name = current.read_text().strip()
            if name:
                return name
        raise NotFoundError(
            "no current sciunit; run `sciunit create <name>` or pass --unit")

    def unit(self) -> Sciunit:
        return Sciunit.open(self.root, self.current_unit_name())

    def pending_deps_path(self, unit: Sciunit) -> Path:
        return unit.path / "pending_deps.json"

    def take_pending_deps(self, unit: Sciunit) -> list[tuple[str, str]]:
        path = self.pending_deps_path(unit)
        if not path.is_file():
            return []
        deps = [tuple(item) for item in json.loads(path.read_text())]
        path.unlink()
        return deps

    def manifest_payload(self, unit: Sciunit, manifest) -> dict:
        ordinal = unit.executions.index(manifest.execution_id) + 1
        return {
            "execution_id": manifest.execution_id,
            "ordinal": f"e{ordinal}",
            "command": manifest.command,
            "working_dir": manifest.working_dir,
            "chunks": len(manifest.chunk_list.digests),
            "total_length": manifest.chunk_list.total_length,
            "annotations": [list(kv) for kv in manifest.annotations],
        }

    @staticmethod
    def command_args(raw: list[str]) -> list[str]:
        cmd = list(raw)
        if cmd and cmd[0] == "--":
            cmd = cmd[1:]
        if not cmd:
            raise InvalidArgumentError("no command given (use: -- cmd args...)")
        return cmd

    # -- commands ---------------------------------------------------------

    def cmd_create(self):
        Sciunit.create(self.root, self.args.name, self.config.chunk_params())
        (self.root / CURRENT_FILE).write_text(self.args.name + "\n")
        return {"created": self.args.name, "root": str(self.root)}, \
            f"created sciunit {self.args.name!r} at {self.root}"

    def cmd_annotate(self):
        unit = self.unit()
        unit.annotate(self.args.key, self.args.value)
        return ({"sciunit": unit.name, "annotations": len(unit.annotations)},
                f"annotated {unit.name!r} ({self.args.key} = {self.args.value})")

    def cmd_package(self):
        unit = self.unit()
        manifest = package_live(
            unit, self.command_args(self.args.cmd),
            working_dir=self.args.workdir,
            policy=SandboxPolicy.parse(self.args.policy),
            extra_deps=self.take_pending_deps(unit))
        payload = self.manifest_payload(unit, manifest)
        return payload, (f"packaged {payload['ordinal']} "
                         f"{manifest.execution_id[:16]} "
                         f"({payload['chunks']} chunks)")

    def cmd_audit(self):
        unit = self.unit()
        import tempfile

        with tempfile.TemporaryDirectory(prefix="sciunit-auditonly-") as tmp:
            _, ilog, deps, _, _ = audit(
                self.command_args(self.args.cmd), Path(tmp) / "sandbox",
                policy=SandboxPolicy.parse(self.args.policy),
                cwd=self.args.workdir)
        stamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime())
        log_path = unit.path / "logs" / f"audit-{stamp}.ndjson"
        log_path.write_text(ilog.to_ndjson())
        payload = {"log": str(log_path), "events": len(ilog.events),
                   "dependencies": len(deps)}
        return payload, (f"audited: {len(ilog.events)} events, "
                         f"{len(deps)} dependencies -> {log_path}")

    def cmd_ingest(self):
        unit = self.unit()
        trace_text = Path(self.args.trace).read_text()
        command = (json.loads(self.args.root_command)
                   if self.args.root_command else None)
        manifest = package_recorded(
            unit, trace_text, self.args.tree, self.args.workdir,
            policy=SandboxPolicy.parse(self.args.policy),
            command=command,
            extra_deps=self.take_pending_deps(unit))
        payload = self.manifest_payload(unit, manifest)
        return payload, (f"ingested {payload['ordinal']} "
                         f"{manifest.execution_id[:16]}")

    def cmd_list(self):
        unit = self.unit()
        payload = executions_payload(unit)
        lines = [f"sciunit {unit.name}"]
        for kv in payload["annotations"]:
            lines.append(f"  @ {kv[0]} = {kv[1]}")
        for row in payload["executions"]:
            lines.append(f"  {row['ordinal']:>4}  {row['execution_id'][:16]}  "
                         f"{' '.join(row['command'])}")
            for kv in row["annotations"]:
                lines.append(f"        - {kv[0]}: {kv[1]}")
        return payload, "\n".join(lines)

    def cmd_materialize(self):
        from .container import materialize_container

        unit = self.unit()
        execution_id = unit.resolve(self.args.ref)
        dest = materialize_container(unit, execution_id, self.args.dest)
        return ({"execution_id": execution_id, "destination": str(dest)},
                f"materialized {execution_id[:16]} into {dest}")

    def cmd_repeat(self):
        unit = self.unit()
        execution_id = unit.resolve(self.args.ref)
        backend = self.args.backend or self.config.backend
        if self.args.procs:
            selected = {p for p in self.args.procs.split(",") if p}
            report = repeat_partial(selected, execution_id, unit,
                                    backend=backend, verify=self.args.verify)
        else:
            report = repeat(execution_id, unit, backend=backend,
                            verify=self.args.verify)
        payload = report.to_json()
        failure = None
        if report.exit_status != 0:
            failure = f"repeat exited with status {report.exit_status}"
        elif report.outputs_matched is False:
            failure = "repeat outputs differ: " + ", ".join(report.mismatched)
        elif report.paths_missing:
            failure = "missing outputs: " + ", ".join(report.paths_missing)
        if failure:
            # the report still goes to stdout so callers can inspect it
            print(canonical_json(payload) if self.args.as_json
                  else report.human_table())
            raise SciunitError(failure)
        return payload, report.human_table()

    def cmd_graph(self):
        unit = self.unit()
        execution_id = unit.resolve(self.args.ref)
        if self.args.serve:
            port = self.args.port if self.args.port is not None \
                else self.config.api_port
            server = ApiServer(unit, port=port, ui_dir=self.config.ui_dir,
                               backend=self.config.backend)
            print(f"serving http://127.0.0.1:{server.port}/ "
                  f"(execution {execution_id[:12]}); Ctrl-C stops",
                  file=sys.stderr)
            try:
                server.serve_forever()
            except KeyboardInterrupt:
                server.shutdown()
            return {"served": True}, ""
        graph, _ = load_provenance(unit, execution_id)
        data = graph.to_json() if self.args.replete else summarize(graph).to_json()
        text = canonical_json(data)
        return data, text

    def cmd_push(self):
        from .repository import push

        unit = self.unit()
        execution_id = unit.resolve(self.args.ref)
        url = push(unit, execution_id, self.config.repository_url)
        return {"url": url, "execution_id": execution_id}, f"pushed to {url}"

    def cmd_pull(self):
        from .repository import pull

        unit = self.unit()
        manifest = pull(unit, self.args.url)
        payload = self.manifest_payload(unit, manifest)
        return payload, f"pulled {payload['ordinal']} {manifest.execution_id[:16]}"

    def cmd_deps(self):
        unit = self.unit()
        path = self.pending_deps_path(unit)
        pending = json.loads(path.read_text()) if path.is_file() else []
        pending.append([self.args.path, self.args.role])
        path.write_text(json.dumps(pending, indent=2) + "\n")
        return ({"pending": pending},
                f"will include {self.args.path} ({self.args.role}) "
                f"in the next package")

    def cmd_config(self):
        return self.config.to_json(), self.config.show()

    def run(self) -> dict:
        handler = getattr(self, f"cmd_{self.args.command}")
        return handler()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        payload, text = Cli(args).run()
        if args.as_json:
            print(canonical_json(payload))
        elif text:
            print(text)
        return 0
    except SciunitError as exc:
        if args.as_json:
            print(canonical_json({"error": str(exc), "code": exc.exit_code}),
                  file=sys.stderr)
        else:
            print(f"sciunit: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())

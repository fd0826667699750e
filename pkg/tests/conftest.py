"""Shared generators and fixtures: random logs, random DAGs, the packaged
sample pipeline, and a loopback HTTP repository."""

import random
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from sciunit.auditor import TraceEvent, ingest_trace


class LoopbackRepo:
    """In-memory PUT/GET bundle repository bound to 127.0.0.1."""

    def __init__(self):
        store: dict[str, bytes] = {}
        self.store = store

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *a):
                pass

            def do_PUT(self):
                length = int(self.headers.get("Content-Length") or 0)
                store[self.path.lstrip("/")] = self.rfile.read(length)
                self.send_response(201)
                self.send_header("Content-Length", "0")
                self.end_headers()

            def do_GET(self):
                body = store.get(self.path.lstrip("/"))
                if body is None:
                    self.send_response(404)
                    self.send_header("Content-Length", "0")
                    self.end_headers()
                    return
                self.send_response(200)
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever,
                                       daemon=True)

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.httpd.server_address[1]}"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()


def _insert_pair(rng, ops, open_op, close_op):
    """Insert an open at a random slot and its close at a later one."""
    at = rng.randint(0, len(ops))
    ops.insert(at, open_op)
    ops.insert(rng.randint(at + 1, len(ops)), close_op)


def random_interaction_log(seed: int, max_procs: int = 8, max_files: int = 12):
    """A random well-formed pipeline log.

    Shape mirrors real workflows: drivers spawn workers, and a file's
    consumers are downstream of its producers (no process depends on work
    done by its own transitive callees-to-come).  Within that dataflow
    structure everything is randomized: spawn tree, open/close nesting,
    event interleaving across processes, read-before-write-close races,
    and processes re-reading files they wrote themselves.
    """
    rng = random.Random(seed)
    n_procs = rng.randint(1, max_procs)

    parents: dict[int, int | None] = {0: None}
    for i in range(1, n_procs):
        parents[i] = rng.randint(0, i - 1)

    # dataflow: per path, every writer is upstream (lower index) of every
    # reader; a path may also be private read+write scratch of one process
    reads: dict[int, list[str]] = {i: [] for i in range(n_procs)}
    writes: dict[int, list[str]] = {i: [] for i in range(n_procs)}
    for f in range(rng.randint(1, max_files)):
        path = f"/data/f{f}"
        roll = rng.random()
        if roll < 0.30:
            for i in rng.sample(range(n_procs), k=rng.randint(1, n_procs)):
                reads[i].append(path)          # pristine input, never written
        elif roll < 0.85 and n_procs > 1:
            split = rng.randint(0, n_procs - 2)
            for i in rng.sample(range(split + 1), k=rng.randint(1, split + 1)):
                writes[i].append(path)
            downstream = range(split + 1, n_procs)
            for i in rng.sample(downstream, k=rng.randint(0, len(downstream))):
                reads[i].append(path)
        else:
            i = rng.randrange(n_procs)         # private scratch file
            writes[i].append(path)
            reads[i].append(path)

    scripts = []
    for i in range(n_procs):
        pid = 100 + i
        parent_pid = None if parents[i] is None else 100 + parents[i]
        script = []
        if parent_pid is not None:
            script.append(("fork", pid, None, parent_pid))
        script.append(("exec", pid, f"/bin/p{i}", None))
        body: list[tuple] = []
        for path in reads[i]:
            _insert_pair(rng, body, ("open_read", pid, path, None),
                         ("close", pid, path, None))
        for path in writes[i]:
            _insert_pair(rng, body, ("open_write", pid, path, None),
                         ("close", pid, path, None))
        script.extend(body)
        script.append(("exit", pid, None, None))
        scripts.append(script)

    def eligible(i):
        if cursors[i] >= len(scripts[i]):
            return False
        if i == 0:
            return True
        return cursors[parents[i]] >= 1  # parent already known to the log

    events = []
    cursors = [0] * n_procs
    while True:
        candidates = [i for i in range(n_procs) if eligible(i)]
        if not candidates:
            break
        i = 0 if not events else rng.choice(candidates)
        kind, pid, path, parent = scripts[i][cursors[i]]
        cursors[i] += 1
        events.append(TraceEvent(seq=len(events) + 1, pid=pid, kind=kind,
                                 path=path, parent_pid=parent,
                                 argv=(f"p{i}", "run") if kind == "exec" else None))
    return events


def random_graph(seed: int, max_nodes: int = 50):
    """Random DAG over process/file nodes for oracle-based reachability tests."""
    from sciunit.provgraph import FILE, PROCESS, PEdge, PNode, RepleteGraph

    rng = random.Random(seed)
    n = rng.randint(2, max_nodes)
    graph = RepleteGraph()
    ids = []
    for i in range(n):
        if rng.random() < 0.5:
            nid = f"proc:{i}"
            graph.add_node(PNode(id=nid, ntype=PROCESS, label=f"p{i}", pid=i))
        else:
            nid = f"/f{i}#1"
            graph.add_node(PNode(id=nid, ntype=FILE, label=f"/f{i}",
                                 path=f"/f{i}", version=1))
        ids.append(nid)
    # edges only from higher to lower index: guaranteed acyclic
    for i in range(1, n):
        for j in range(i):
            if rng.random() < min(0.15, 4.0 / n):
                src, dst = ids[i], ids[j]
                if src.startswith("proc") and dst.startswith("proc"):
                    etype = "spawned"
                elif src.startswith("proc"):
                    etype = "read"
                elif dst.startswith("proc"):
                    etype = "wrote"
                else:
                    continue  # file-file edges never occur
                graph.add_edge(PEdge(src, dst, etype, (i, i + 1)))
    return graph


def ingested(seed: int, **kw):
    deps, log = ingest_trace(random_interaction_log(seed, **kw))
    return deps, log


def package_pipeline(base_dir, params=None):
    """Package the bundled sample pipeline from its recorded trace fixture."""
    from sciunit import corpus
    from sciunit.auditor import package_recorded
    from sciunit.chunkstore import RollingHashParams
    from sciunit.container import Sciunit

    params = params or RollingHashParams(boundary_bits=9, min_chunk=64,
                                         max_chunk=4096)
    unit = Sciunit.create(base_dir / "units", "pipeline", params)
    tree = corpus.install_tree(base_dir / "tree")
    corpus.run_reference(tree)
    manifest = package_recorded(
        unit, corpus.trace_text(), tree, corpus.PIPELINE_DIR,
        environment=dict(corpus.PIPELINE_ENV))
    return unit, manifest


def workflow_replete(fan_in=12, written=12, libs=40, pairs=12):
    """Expand a known 12-node/13-edge workflow skeleton into a replete graph.

    The skeleton (4 processes, 8 files, 13 edges) is padded with the
    system-level noise a real audit records: per-process fan-ins of
    similar input files, written scratch files, helper subprocesses with
    their script and temp files, shared libraries read by every process,
    and files shared by exactly two processes.  Ground truth (skeleton
    size, padding counts) is returned for assertions.
    """
    from sciunit.provgraph import FILE, PROCESS, PEdge, PNode, RepleteGraph

    g = RepleteGraph()
    procs = []
    for i, argv in enumerate(["driver", "stage_a", "stage_b", "stage_c"]):
        nid = f"proc:{100 + i}"
        g.add_node(PNode(id=nid, ntype=PROCESS, label=argv, pid=100 + i))
        procs.append(nid)
    p0, p1, p2, p3 = procs

    def file_node(path):
        nid = f"{path}#1"
        g.add_node(PNode(id=nid, ntype=FILE, label=path, path=path, version=1))
        return nid

    def read(proc, fid, t=(1, 2)):
        g.add_edge(PEdge(proc, fid, "read", t))

    def wrote(fid, proc, t=(1, 2)):
        g.add_edge(PEdge(fid, proc, "wrote", t))

    # skeleton: 12 nodes, 13 edges
    for child in (p1, p2, p3):
        g.add_edge(PEdge(child, p0, "spawned", (1, 9)))
    f = {i: file_node(f"/work/f{i}") for i in range(1, 9)}
    read(p1, f[1]); read(p1, f[2]); wrote(f[3], p1); wrote(f[4], p1)
    read(p2, f[3]); read(p2, f[7]); wrote(f[5], p2)
    read(p3, f[4]); read(p3, f[8]); wrote(f[6], p3)

    skeleton_nodes = len(g.nodes)
    skeleton_edges = len(g.edges)

    for pi, proc in enumerate(procs):
        for k in range(fan_in):
            read(proc, file_node(f"/inputs/p{pi}/in{k}.dat"))
        for k in range(written):
            wrote(file_node(f"/scratch/p{pi}/out{k}.tmp"), proc)
        helper = f"proc:{200 + pi}"
        g.add_node(PNode(id=helper, ntype=PROCESS, label=f"helper{pi}", pid=200 + pi))
        g.add_edge(PEdge(helper, proc, "spawned", (2, 8)))
        read(helper, file_node(f"/lib/helpers/h{pi}.script"))
        wrote(file_node(f"/tmp/h{pi}.out"), helper)
    for k in range(libs):
        lib = file_node(f"/usr/lib/lib{k}.so")
        for proc in procs:
            read(proc, lib)
    pair_cycle = [(p1, p2), (p2, p3), (p1, p3), (p0, p1)]
    for k in range(pairs):
        a, b = pair_cycle[k % len(pair_cycle)]
        shared = file_node(f"/shared/pair{k}.cfg")
        read(a, shared)
        read(b, shared)

    truth = {
        "skeleton_nodes": skeleton_nodes,
        "skeleton_edges": skeleton_edges,
        "procs": procs,
        "replete_nodes": len(g.nodes),
        "replete_edges": len(g.edges),
        "replete_files": sum(1 for n in g.nodes.values() if n.ntype == FILE),
    }
    return g, truth

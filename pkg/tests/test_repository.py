import hashlib
import os

import pytest

from conftest import LoopbackRepo

from sciunit.chunkstore import RollingHashParams
from sciunit.container import Sciunit, commit_container, export_bundle, materialize_container
from sciunit.errors import ConfigError, CorruptionError, TransportError
from sciunit.repository import pull, push

PARAMS = RollingHashParams(boundary_bits=9, min_chunk=64, max_chunk=4096)


@pytest.fixture
def unit_with_execution(tmp_path):
    unit = Sciunit.create(tmp_path / "units", "src", PARAMS)
    sandbox = tmp_path / "sbx"
    (sandbox / "data").mkdir(parents=True)
    (sandbox / "data/blob.bin").write_bytes(os.urandom(20_000))
    manifest = commit_container(unit, sandbox, ["prog"], {}, "/data")
    return unit, manifest


def test_push_pull_round_trip(tmp_path, unit_with_execution):
    unit, manifest = unit_with_execution
    with LoopbackRepo() as repo:
        url = push(unit, manifest.execution_id, repo.url)
        assert url.startswith(repo.url)
        peer = Sciunit.create(tmp_path / "peer-root", "peer", PARAMS)
        pulled = pull(peer, url)
        assert pulled.execution_id == manifest.execution_id
        a = materialize_container(unit, manifest.execution_id, tmp_path / "a")
        b = materialize_container(peer, manifest.execution_id, tmp_path / "b")
        assert (a / "data/blob.bin").read_bytes() == (b / "data/blob.bin").read_bytes()


def test_pull_of_tampered_bundle_rejected(tmp_path, unit_with_execution):
    unit, manifest = unit_with_execution
    with LoopbackRepo() as repo:
        url = push(unit, manifest.execution_id, repo.url)
        digest = url.rsplit("/", 1)[-1]
        blob = bytearray(repo.store[digest])
        blob[-1] ^= 0xFF
        repo.store[digest] = bytes(blob)
        peer = Sciunit.create(tmp_path / "peer-root", "peer", PARAMS)
        with pytest.raises(CorruptionError):
            pull(peer, url)
        assert peer.executions == []


def test_push_without_repository_is_config_error(unit_with_execution):
    unit, manifest = unit_with_execution
    with pytest.raises(ConfigError):
        push(unit, manifest.execution_id, "")


def test_network_failure_raises_transport_error(unit_with_execution):
    unit, manifest = unit_with_execution
    # unroutable per RFC 5737; retries then gives up
    import sciunit.repository as repository

    old_retries, repository.RETRIES = repository.RETRIES, 2
    old_backoff, repository.BACKOFF_SECONDS = repository.BACKOFF_SECONDS, 0.01
    try:
        with pytest.raises(TransportError):
            push(unit, manifest.execution_id, "http://127.0.0.1:9/none")
    finally:
        repository.RETRIES = old_retries
        repository.BACKOFF_SECONDS = old_backoff


def test_pull_unknown_resource_is_transport_error(tmp_path):
    peer = Sciunit.create(tmp_path / "p", "peer", PARAMS)
    with LoopbackRepo() as repo:
        with pytest.raises(TransportError):
            pull(peer, repo.url + "/" + "0" * 64)


def test_pushed_name_is_bundle_digest(unit_with_execution):
    unit, manifest = unit_with_execution
    with LoopbackRepo() as repo:
        url = push(unit, manifest.execution_id, repo.url)
        digest = url.rsplit("/", 1)[-1]
        bundle = export_bundle(unit, manifest.execution_id)
        assert hashlib.sha256(bundle).hexdigest() == digest

import pytest

from app.services.experiments import load_config
from app.storage import RunStore, StorageError, plan_chunks, read_raw, write_raw


@pytest.fixture
def config():
    return load_config("corr_decay", {"n": 32, "r_grid": [2, 4, 8], "samples": 20, "batches": 4, "chunk_size": 8})


class TestRawFiles:
    def test_header_only_for_no_rows(self, tmp_path):
        path = tmp_path / "raw.csv"
        write_raw(path, ["T_4"], [])
        assert path.read_text() == "sample_index,T_4\n"
        assert read_raw(path) == (["T_4"], [])

    def test_values_survive_text(self, tmp_path):
        path = tmp_path / "raw.csv"
        values = [0.1 + 0.2, 1 / 3, 2.0**-31, 123456789.123456789]
        write_raw(path, ["a", "b", "c", "d"], [(7, values)])
        assert read_raw(path) == (["a", "b", "c", "d"], [(7, values)])
        assert path.read_text().splitlines()[1].startswith("7,0.30000000000000004,")

    def test_missing_file(self, tmp_path):
        with pytest.raises(StorageError):
            read_raw(tmp_path / "nope.csv")

    def test_wrong_header(self, tmp_path):
        path = tmp_path / "raw.csv"
        path.write_text("index,T_4\n0,1.0\n")
        with pytest.raises(StorageError, match="not a raw sample file"):
            read_raw(path)

    def test_malformed_value(self, tmp_path):
        path = tmp_path / "raw.csv"
        path.write_text("sample_index,T_4\n0,abc\n")
        with pytest.raises(StorageError, match="Malformed"):
            read_raw(path)

    def test_storage_error_is_os_error(self, tmp_path):
        with pytest.raises(OSError):
            read_raw(tmp_path / "nope.csv")


class TestPlanChunks:
    def test_last_chunk_is_short(self):
        chunks = plan_chunks(20, 8)
        assert [(c.start, c.stop) for c in chunks] == [(0, 8), (8, 16), (16, 20)]
        assert [c.index for c in chunks] == [0, 1, 2]

    def test_no_samples(self):
        assert plan_chunks(0, 8) == []


class TestRunStore:
    def test_fresh_manifest(self, store: RunStore, config):
        manifest = store.begin(config)
        assert manifest.config_hash == config.config_hash()
        assert manifest.sample_stop == 20
        assert len(manifest.chunks) == 3
        assert not manifest.complete
        assert manifest.raw_path == str(store.raw_path)

    def test_manifest_round_trip(self, store: RunStore, config):
        manifest = store.begin(config)
        manifest.chunks[0].completed = True
        store.save_manifest(manifest)
        loaded = store.load_manifest()
        assert loaded == manifest

    def test_resume_keeps_completed_chunks(self, store: RunStore, config):
        manifest = store.begin(config)
        store.write_chunk(0, ["T_2"], [(0, [1.0])])
        manifest.chunks[0].completed = True
        manifest.chunks[1].completed = True
        store.save_manifest(manifest)

        resumed = store.begin(config)
        # chunk 1 was marked done but its file never landed
        assert [c.completed for c in resumed.chunks] == [True, False, False]

    def test_changed_config_discards_chunks(self, store: RunStore, config):
        manifest = store.begin(config)
        store.write_chunk(0, ["T_2"], [(0, [1.0])])
        manifest.chunks[0].completed = True
        store.save_manifest(manifest)

        other = config.model_copy(update={"master_seed": 1})
        fresh = store.begin(other)
        assert fresh.config_hash == other.config_hash()
        assert not any(c.completed for c in fresh.chunks)
        assert not store.chunk_path(0).exists()

    def test_chunk_round_trip(self, store: RunStore):
        rows = [(8, [1.5, 2.5]), (9, [3.5, 4.5])]
        store.write_chunk(1, ["a", "b"], rows)
        assert store.chunk_path(1).name == "chunk_00001.csv"
        assert store.read_chunk(1) == rows

    def test_no_manifest(self, store: RunStore):
        assert store.load_manifest() is None

    def test_corrupt_manifest(self, store: RunStore):
        store.manifest_path.write_text("{not json")
        with pytest.raises(StorageError):
            store.load_manifest()

    def test_missing_report(self, store: RunStore):
        with pytest.raises(StorageError):
            store.load_report()

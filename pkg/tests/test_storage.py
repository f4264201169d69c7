"""Binary dumps, hypergraph text files and flat configs."""

from __future__ import annotations

import struct

import numpy as np
import pytest

from genet import synthetic
from genet.config import RunConfig
from genet.errors import DumpFormatError, MissingCheckpoint, ParseError
from genet.pipeline import build_graph
from genet.storage import (
    read_config,
    read_dump,
    read_hypergraph,
    read_sidecar,
    write_config,
    write_dump,
    write_hypergraph,
)


class TestDump:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        m = rng.normal(size=(7, 5)).astype(np.float32)
        write_dump(tmp_path / "m.bin", m, [(f"k{i}", "user") for i in range(7)])
        back = read_dump(tmp_path / "m.bin")
        assert back.dtype == np.float32
        assert back.tobytes() == m.tobytes()
        assert read_sidecar(tmp_path / "m.bin")[3] == ("k3", "user")

    def test_header_layout(self, tmp_path):
        write_dump(tmp_path / "m.bin", np.ones((2, 3)))
        raw = (tmp_path / "m.bin").read_bytes()
        assert raw[:4] == b"GNET"
        assert struct.unpack("<III", raw[4:16]) == (1, 2, 3)
        assert len(raw) == 16 + 2 * 3 * 4
        assert np.frombuffer(raw[16:20], "<f4")[0] == 1.0

    def test_float64_rounds_to_float32(self, tmp_path, rng):
        m = rng.normal(size=(3, 2))
        write_dump(tmp_path / "m.bin", m)
        np.testing.assert_array_equal(read_dump(tmp_path / "m.bin"), m.astype(np.float32))

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda raw: b"XNET" + raw[4:],
            lambda raw: raw[:4] + struct.pack("<I", 2) + raw[8:],
            lambda raw: raw[:-4],
            lambda raw: raw[:10],
        ],
    )
    def test_corruption_rejected(self, tmp_path, mutate):
        p = tmp_path / "m.bin"
        write_dump(p, np.zeros((2, 2)))
        p.write_bytes(mutate(p.read_bytes()))
        with pytest.raises(DumpFormatError):
            read_dump(p)

    def test_missing(self, tmp_path):
        with pytest.raises(MissingCheckpoint):
            read_dump(tmp_path / "none.bin")

    def test_label_count_checked(self, tmp_path):
        with pytest.raises(ValueError):
            write_dump(tmp_path / "m.bin", np.zeros((2, 2)), [("a", "user")])


class TestHypergraphFiles:
    def test_round_trip(self, tmp_path):
        data = synthetic.feedback(n_users=30, n_items=15, n_communities=3, min_len=3, max_len=4, seed=2)
        g, idmap = build_graph(data.social, data.poi, data.reviews, data.item_meta, data.interactions)
        write_hypergraph(tmp_path, g, idmap)
        g2, idmap2 = read_hypergraph(tmp_path)
        assert g2 == g
        assert g2.edge_names == g.edge_names
        assert idmap2.keys == idmap.keys and idmap2.kinds == idmap.kinds

    def test_missing(self, tmp_path):
        with pytest.raises(MissingCheckpoint):
            read_hypergraph(tmp_path)

    def test_bad_member(self, tmp_path):
        g, idmap = synthetic.planted(2, 2)
        write_hypergraph(tmp_path, g, idmap)
        path = tmp_path / "hypergraph.tsv"
        path.write_text(path.read_text().replace("0,1", "0,x"))
        with pytest.raises(ParseError):
            read_hypergraph(tmp_path)


class TestConfig:
    def test_round_trip(self, tmp_path):
        cfg = RunConfig(embedding_dim=8, lam=0.3, cold_start="users", hscl_enabled=False)
        write_config(tmp_path / "c.cfg", cfg)
        assert RunConfig(**read_config(tmp_path / "c.cfg", RunConfig)) == cfg

    def test_unknown_key(self, tmp_path):
        (tmp_path / "c.cfg").write_text("# comment\nembedding_dim = 8\nwidth = 3\n")
        with pytest.raises(ParseError) as info:
            read_config(tmp_path / "c.cfg", RunConfig)
        assert info.value.line_no == 3

    def test_bad_value(self, tmp_path):
        (tmp_path / "c.cfg").write_text("epochs = many\n")
        with pytest.raises(ParseError):
            read_config(tmp_path / "c.cfg", RunConfig)

    def test_defaults(self):
        cfg = RunConfig()
        pc, fc = cfg.pretrain_config(), cfg.finetune_config()
        assert (pc.d, pc.batch_size, pc.learning_rate, pc.epochs, pc.lam) == (64, 4096, 0.0005, 500, 0.1)
        assert (pc.beta1_intra, pc.beta2_inter) == (0.005, 0.01)
        assert (fc.epochs, fc.warm_epochs, fc.warm_factor, fc.layers, fc.seq_len) == (10, 3, 10.0, 2, 20)
        assert cfg.k_values() == (10, 20)

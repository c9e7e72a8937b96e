import math

import numpy as np
import pytest
import torch

from ccpc.globalpred import (
    GlobalPredictor,
    ReferenceFusion,
    causal_scores,
    gather_and_fuse,
    topk_references,
)


def oracle_scores(vectors: np.ndarray) -> np.ndarray:
    """Brute-force double loop: -squared L2 for m < n, -inf elsewhere."""
    p = vectors.shape[0]
    out = np.full((p, p), -np.inf)
    for m in range(p):
        for n in range(p):
            if m < n:
                out[m, n] = -float(((vectors[m] - vectors[n]) ** 2).sum())
    return out


def oracle_topk(scores: np.ndarray, k: int) -> list[list[int]]:
    """Sort-and-slice per position: score descending, smaller index first."""
    p = scores.shape[0]
    refs = []
    for n in range(p):
        cands = sorted(range(n), key=lambda m: (-scores[m, n], m))
        refs.append(cands[:k])
    return refs


class TestCausalScores:
    def test_identical_vectors_score_zero(self):
        g1 = torch.tensor([[1.0, 2.0], [1.0, 2.0]])
        scores = causal_scores(g1)
        assert scores[0, 1] == 0.0

    def test_closed_form_025(self):
        g1 = torch.tensor([[0.0, 0.0], [3.0, 4.0]])
        scores = causal_scores(g1)
        assert scores[0, 1] == -25.0

    def test_mask_is_strictly_causal(self):
        g1 = torch.randint(-5, 5, (9, 3)).double()
        scores = causal_scores(g1)
        for m in range(9):
            for n in range(9):
                if m >= n:
                    assert scores[m, n] == -math.inf

    def test_matches_bruteforce_on_3x3_grid(self, rng):
        vectors = rng.integers(-8, 8, size=(9, 4)).astype(np.float64)
        got = causal_scores(torch.from_numpy(vectors)).numpy()
        want = oracle_scores(vectors)
        assert np.array_equal(got, want)

    def test_cosine_mode_runs_and_is_causal(self):
        g1 = torch.randn(6, 3).double()
        scores = causal_scores(g1, distance="cosine")
        assert scores[3, 1] == -math.inf
        assert scores[1, 3] == pytest.approx(
            torch.nn.functional.cosine_similarity(g1[1], g1[3], dim=0).item(), abs=1e-9
        )


class TestTopkReferences:
    def test_first_position_has_no_references(self):
        scores = causal_scores(torch.randn(5, 2).round())
        _, counts = topk_references(scores, 4)
        assert counts[0] == 0

    def test_fewer_candidates_than_k(self):
        scores = causal_scores(torch.randn(5, 2).round())
        indices, counts = topk_references(scores, 4)
        assert counts[2] == 2
        assert sorted(indices[2, :2].tolist()) == [0, 1]

    def test_matches_bruteforce_with_ties(self, rng):
        # small integer alphabet forces plenty of exact score ties
        for trial in range(25):
            vectors = rng.integers(0, 2, size=(25, 3)).astype(np.float64)
            scores_np = oracle_scores(vectors)
            want = oracle_topk(scores_np, 4)
            scores = causal_scores(torch.from_numpy(vectors))
            indices, counts = topk_references(scores, 4)
            for n in range(25):
                got = indices[n, : counts[n]].tolist()
                assert got == want[n], f"trial {trial}, position {n}"

    def test_rejects_bad_k(self):
        with pytest.raises(ValueError):
            topk_references(torch.zeros(3, 3), 0)


class TestGatherAndFuse:
    def make_mlp(self, in_dim=3, out_dim=5):
        torch.manual_seed(4)
        return ReferenceFusion(in_dim, out_dim)

    def test_empty_reference_set_gives_zero(self):
        mlp = self.make_mlp()
        g2 = torch.randn(1, 4, 3)
        indices = torch.zeros(1, 4, 2, dtype=torch.int64)
        counts = torch.tensor([[0, 1, 2, 2]])
        out = gather_and_fuse(indices, counts, g2, mlp)
        assert torch.equal(out[0, 0], torch.zeros(5))

    def test_identical_references_equal_single_output(self):
        mlp = self.make_mlp()
        vec = torch.randn(3)
        g2 = vec.repeat(4, 1).unsqueeze(0)
        indices = torch.tensor([[[0, 1, 2, 3]]]).expand(1, 4, 4).contiguous()
        counts = torch.tensor([[0, 1, 2, 3]])
        out = gather_and_fuse(indices, counts, g2, mlp)
        single = mlp(vec)
        for n in (1, 2, 3):
            assert torch.allclose(out[0, n], single, atol=1e-6)

    def test_average_matches_per_vector_oracle(self):
        mlp = self.make_mlp()
        g2 = torch.randn(1, 6, 3)
        indices = torch.tensor([[[1, 3, 4, 5]]]).expand(1, 6, 4).contiguous()
        counts = torch.full((1, 6), 4)
        out = gather_and_fuse(indices, counts, g2, mlp)
        oracle = sum(mlp(g2[0, i]) for i in (1, 3, 4, 5)) / 4
        assert torch.allclose(out[0, 0], oracle, atol=1e-6)

    def test_reference_order_permutation_invariant(self):
        mlp = self.make_mlp()
        g2 = torch.randn(1, 6, 3)
        counts = torch.full((1, 1), 4)
        a = gather_and_fuse(torch.tensor([[[1, 3, 4, 5]]]), counts, g2, mlp)
        b = gather_and_fuse(torch.tensor([[[5, 4, 3, 1]]]), counts, g2, mlp)
        assert torch.allclose(a, b, atol=1e-6)


class TestGlobalPredictor:
    def test_output_shape_and_zero_first_position(self):
        pred = GlobalPredictor(group2_dim=4, out_channels=6, k=4)
        g1 = torch.randint(-3, 3, (1, 2, 3, 3)).float()
        g2 = torch.randn(1, 4, 3, 3)
        out = pred(g1, g2)
        assert out.shape == (1, 6, 3, 3)
        assert torch.equal(out[0, :, 0, 0], torch.zeros(6))

    def test_dense_equals_topk_for_two_positions(self):
        torch.manual_seed(5)
        dense = GlobalPredictor(group2_dim=3, out_channels=4, mode="dense")
        topk = GlobalPredictor(group2_dim=3, out_channels=4, k=1, mode="topk")
        topk.load_state_dict(dense.state_dict())
        g1 = torch.randint(0, 4, (1, 2, 1, 2)).float()
        g2 = torch.randn(1, 3, 1, 2)
        assert torch.allclose(dense(g1, g2), topk(g1, g2), atol=1e-7)

    def test_dense_mode_uses_all_causal_points(self):
        torch.manual_seed(6)
        pred = GlobalPredictor(group2_dim=2, out_channels=3, mode="dense")
        g1 = torch.randint(0, 5, (1, 2, 2, 3)).float()
        g2 = torch.randn(1, 2, 2, 3)
        out = pred(g1, g2)
        flat_g2 = g2.flatten(2).transpose(1, 2)[0]
        n = 5  # last position: references are all five earlier points
        oracle = torch.stack([pred.mlp(flat_g2[m]) for m in range(n)]).mean(0)
        got = out.flatten(2).transpose(1, 2)[0, n]
        assert torch.allclose(got, oracle, atol=1e-6)

    def test_causality_exhaustive_5x5(self):
        torch.manual_seed(7)
        pred = GlobalPredictor(group2_dim=2, out_channels=3, k=4).double()
        base_g1 = torch.randint(-2, 3, (1, 2, 5, 5)).double()
        base_g2 = torch.randint(-2, 3, (1, 2, 5, 5)).double()
        with torch.no_grad():
            base = pred(base_g1, base_g2)
        for pi in range(5):
            for pj in range(5):
                n_pos = pi * 5 + pj
                for group, src in (("g1", base_g1), ("g2", base_g2)):
                    for ch in range(2):
                        poked_g1 = base_g1.clone()
                        poked_g2 = base_g2.clone()
                        tgt = poked_g1 if group == "g1" else poked_g2
                        tgt[0, ch, pi, pj] += 1.0
                        with torch.no_grad():
                            out = pred(poked_g1, poked_g2)
                        diff = (out - base).abs().flatten(2)[0].sum(0)
                        # outputs strictly before the poked position must not
                        # move, nor may a position react to its own group 2
                        for q in range(n_pos + 1):
                            if q == n_pos and group == "g1":
                                continue  # own group 1 legitimately conditions the global context
                            assert diff[q] == 0.0, (
                                f"position {q} leaked from {group}[{ch}] at {n_pos}"
                            )

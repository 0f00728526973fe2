import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdaglab.masks import (
    AttentionMask,
    BlockLayout,
    build_causal_mask,
    build_sdag_mask,
    extend_for_generation,
    render_mask_figure,
    render_mask_pgm,
    render_mask_text,
)


def direct_mask_oracle(layout: BlockLayout) -> np.ndarray:
    """Independent evaluator: apply the allow-rule literally at every (r, c)."""

    def in_span(p, span):
        return span[0] <= p < span[1]

    n = layout.total_len
    out = np.zeros((n, n), dtype=bool)
    for r in range(n):
        for c in range(n):
            same_doc = any(in_span(r, s) and in_span(c, s) for s in layout.doc_spans)
            out[r, c] = (
                (in_span(c, layout.task_span) or in_span(r, layout.context_span)) and r >= c
            ) or (same_doc and r >= c)
    return out


def layout_from_lengths(task_len, doc_lens, context_len):
    spans = []
    cursor = 0
    for length in [task_len, *doc_lens, context_len]:
        spans.append((cursor, cursor + length))
        cursor += length
    return BlockLayout(
        task_span=spans[0],
        doc_spans=tuple(spans[1:-1]),
        context_span=spans[-1],
        total_len=cursor,
    )


layouts = st.builds(
    layout_from_lengths,
    st.integers(min_value=1, max_value=6),
    st.lists(st.integers(min_value=1, max_value=6), min_size=0, max_size=5),
    st.integers(min_value=1, max_value=6),
)

EIGHT_TOKEN_LAYOUT = layout_from_lengths(2, [2, 2], 2)


class TestCausalMask:
    def test_len_two(self):
        mask = build_causal_mask(2)
        assert mask.allowed.tolist() == [[True, False], [True, True]]

    def test_diagonal_true(self):
        mask = build_causal_mask(7)
        assert np.all(np.diag(mask.allowed))

    def test_strict_upper_false(self):
        mask = build_causal_mask(7)
        assert not np.any(np.triu(mask.allowed, k=1))

    def test_rejects_non_positive_length(self):
        with pytest.raises(ValueError):
            build_causal_mask(0)


class TestSdagMask:
    def test_spec_point_entries(self):
        mask = build_sdag_mask(EIGHT_TOKEN_LAYOUT).allowed
        assert not mask[4, 2]  # row in second doc, key in first doc
        assert mask[4, 1]  # key in task span
        assert mask[6, 3]  # context row sees everything before it
        assert mask[3, 2]  # same document block, causal

    def test_full_eight_token_matrix_matches_oracle(self):
        mask = build_sdag_mask(EIGHT_TOKEN_LAYOUT)
        assert np.array_equal(mask.allowed, direct_mask_oracle(EIGHT_TOKEN_LAYOUT))

    @settings(max_examples=150, deadline=None)
    @given(layouts)
    def test_matches_oracle_on_random_layouts(self, layout):
        assert np.array_equal(build_sdag_mask(layout).allowed, direct_mask_oracle(layout))

    @settings(max_examples=60, deadline=None)
    @given(layouts)
    def test_cross_document_zero_block(self, layout):
        allowed = build_sdag_mask(layout).allowed
        for i, (si, ei) in enumerate(layout.doc_spans):
            for j, (sj, ej) in enumerate(layout.doc_spans):
                if i != j:
                    assert not np.any(allowed[si:ei, sj:ej])

    @settings(max_examples=60, deadline=None)
    @given(layouts)
    def test_context_rows_fully_causal(self, layout):
        allowed = build_sdag_mask(layout).allowed
        start, end = layout.context_span
        pos = np.arange(layout.total_len)
        expected = pos[start:end, None] >= pos[None, :]
        assert np.array_equal(allowed[start:end, :], expected)

    @settings(max_examples=60, deadline=None)
    @given(layouts)
    def test_doc_block_restriction_is_causal(self, layout):
        allowed = build_sdag_mask(layout).allowed
        for start, end in layout.doc_spans:
            block = allowed[start:end, start:end]
            assert np.array_equal(block, build_causal_mask(end - start).allowed)

    @settings(max_examples=60, deadline=None)
    @given(layouts)
    def test_monotone_causality(self, layout):
        allowed = build_sdag_mask(layout).allowed
        assert not np.any(np.triu(allowed, k=1))

    @given(
        st.integers(min_value=1, max_value=6),
        st.lists(st.integers(min_value=1, max_value=6), min_size=0, max_size=1),
        st.integers(min_value=1, max_value=6),
    )
    def test_k_le_one_equals_causal(self, task_len, doc_lens, context_len):
        layout = layout_from_lengths(task_len, doc_lens, context_len)
        sdag = build_sdag_mask(layout)
        causal = build_causal_mask(layout.total_len)
        assert np.array_equal(sdag.allowed, causal.allowed)


class TestLayoutValidation:
    def test_gap_rejected(self):
        with pytest.raises(ValueError, match="gap"):
            BlockLayout(task_span=(0, 2), doc_spans=((3, 4),), context_span=(4, 6), total_len=6)

    def test_task_must_start_at_zero(self):
        with pytest.raises(ValueError):
            BlockLayout(task_span=(1, 2), doc_spans=(), context_span=(2, 4), total_len=4)

    def test_context_must_end_at_total(self):
        with pytest.raises(ValueError):
            BlockLayout(task_span=(0, 2), doc_spans=(), context_span=(2, 3), total_len=4)

    def test_empty_span_rejected(self):
        with pytest.raises(ValueError):
            BlockLayout(task_span=(0, 0), doc_spans=(), context_span=(0, 2), total_len=2)

    def test_round_trips_via_dict(self):
        layout = EIGHT_TOKEN_LAYOUT
        assert BlockLayout.from_dict(layout.to_dict()) == layout


class TestExtendForGeneration:
    def test_new_rows_are_fully_causal(self):
        mask = build_sdag_mask(EIGHT_TOKEN_LAYOUT)
        extended = extend_for_generation(mask, 11)
        assert np.array_equal(extended.allowed[:8, :8], mask.allowed)
        for r in range(8, 11):
            assert np.all(extended.allowed[r, : r + 1])
            assert not np.any(extended.allowed[r, r + 1 :])

    def test_old_rows_never_see_new_columns(self):
        mask = build_sdag_mask(EIGHT_TOKEN_LAYOUT)
        extended = extend_for_generation(mask, 12)
        assert not np.any(extended.allowed[:8, 8:])

    def test_same_size_is_identity(self):
        mask = build_causal_mask(4)
        assert extend_for_generation(mask, 4) is mask


class TestRendering:
    def test_causal_text_grid(self):
        text = render_mask_text(build_causal_mask(3))
        assert text == "#..\n##.\n###\n"

    def test_sdag_grid_shows_isolated_document_triangles(self):
        text = render_mask_text(build_sdag_mask(EIGHT_TOKEN_LAYOUT), EIGHT_TOKEN_LAYOUT)
        rows = [line for line in text.splitlines() if "#" in line or "." in line]
        doc_rows = rows[2:4], rows[4:6]
        assert doc_rows[0] == ["##|#.|..|..", "##|##|..|.."]
        assert doc_rows[1] == ["##|..|#.|..", "##|..|##|.."]

    def test_byte_deterministic(self, tmp_path):
        mask = build_sdag_mask(EIGHT_TOKEN_LAYOUT)
        p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
        render_mask_figure(mask, EIGHT_TOKEN_LAYOUT, p1)
        render_mask_figure(mask, EIGHT_TOKEN_LAYOUT, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_pgm_output(self, tmp_path):
        mask = build_causal_mask(2)
        body = render_mask_pgm(mask)
        assert body.startswith(b"P2\n2 2\n255\n")
        path = tmp_path / "mask.pgm"
        render_mask_figure(mask, None, path)
        assert path.read_bytes() == body


class TestAttentionMaskType:
    def test_rejects_non_causal_matrix(self):
        bad = np.ones((3, 3), dtype=bool)
        with pytest.raises(ValueError):
            AttentionMask(allowed=bad, kind="causal")

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            AttentionMask(allowed=np.zeros((2, 3), dtype=bool), kind="causal")

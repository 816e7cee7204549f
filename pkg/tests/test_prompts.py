import pytest

from hxrcast import InputStats, assemble_prompt, build_input_descriptor
from hxrcast.errors import TemplateError
from hxrcast.prompts import (
    FusionPrompt,
    PromptDescriptors,
    SpecialTokens,
    default_descriptors,
    load_descriptors,
    render_value,
)


class TestInputDescriptor:
    def test_contains_stats_and_parameters(self):
        text = build_input_descriptor(InputStats(0.0, 1.0, 0.5), 400, 400, "SG4")
        assert "0.5" in text
        assert "400" in text
        assert "SG4" in text

    def test_unknown_placeholder_named(self):
        with pytest.raises(TemplateError, match="foo"):
            build_input_descriptor(InputStats(0, 1, 0.5), 400, 400, "SG4",
                                   template="mystery {foo} value")

    def test_constant_stats_rendered_three_times(self):
        text = build_input_descriptor(InputStats(2, 2, 2), 10, 10, "SG4")
        stats_clause = text.split("ranges")[1]
        assert stats_clause.count("2") >= 3

    def test_six_significant_digits(self):
        assert render_value(0.1234567890) == "0.123457"
        assert render_value(2.0) == "2"

    def test_bad_lengths_rejected(self):
        with pytest.raises(TemplateError):
            build_input_descriptor(InputStats(0, 1, 0.5), 0, 400, "SG4")


class TestAssemble:
    def _bindings(self):
        return {
            "min": "0", "max": "1", "median": "0.5",
            "seq_len": "400", "pred_len": "400", "phase_plate": "SG4",
            "dt_ns": "0.025", "target_size_um": "430",
        }

    def test_starts_with_begin_token(self):
        prompt = assemble_prompt(default_descriptors(), self._bindings())
        assert prompt.text.startswith("<|begin_of_text|>")

    def test_section_order_fixed(self):
        prompt = assemble_prompt(default_descriptors(), self._bindings())
        i_ctx = prompt.text.index("context")
        i_task = prompt.text.index("<|start_header_id|>task")
        i_inp = prompt.text.index("<|start_header_id|>input")
        assert i_ctx < i_task < i_inp

    def test_placeholder_free_templates_concatenate(self):
        d = PromptDescriptors("alpha", "beta", "gamma")
        prompt = assemble_prompt(d, {})
        for token in ("alpha", "beta", "gamma"):
            assert token in prompt.text

    def test_deterministic(self):
        a = assemble_prompt(default_descriptors(), self._bindings())
        b = assemble_prompt(default_descriptors(), self._bindings())
        assert a.text == b.text

    def test_unresolved_placeholder_rejected(self):
        d = PromptDescriptors("has {hole}", "b", "c")
        with pytest.raises(TemplateError, match="hole"):
            assemble_prompt(d, {})

    def test_round_trips_through_serialization(self):
        prompt = assemble_prompt(default_descriptors(), self._bindings())
        from hxrcast import jsontext
        assert jsontext.loads(jsontext.dumps(prompt.text)) == prompt.text

    def test_char_budget_enforced(self):
        d = PromptDescriptors("x" * 100, "y", "z")
        with pytest.raises(TemplateError, match="budget"):
            assemble_prompt(d, {}, max_chars=50)

    def test_custom_special_tokens(self):
        tokens = SpecialTokens(begin="<s>", header_start="[", header_end="]",
                               section_end="</s>")
        prompt = assemble_prompt(PromptDescriptors("a", "b", "c"), {}, tokens=tokens)
        assert prompt.text.startswith("<s>[context]")


class TestDescriptorFiles:
    def test_load_from_directory(self, tmp_path):
        for name in ("context", "task", "input"):
            (tmp_path / f"{name}.txt").write_text(f"{name} body", encoding="utf-8")
        d = load_descriptors(tmp_path)
        assert d.context_text == "context body"

    def test_missing_file_rejected(self, tmp_path):
        (tmp_path / "context.txt").write_text("x")
        with pytest.raises(TemplateError, match="task"):
            load_descriptors(tmp_path)

    def test_empty_template_rejected(self):
        with pytest.raises(TemplateError):
            PromptDescriptors("", "b", "c")

    def test_prompt_invariant_no_leftover_markers(self):
        with pytest.raises(TemplateError):
            FusionPrompt(text="oops {leftover}", token_budget=100)

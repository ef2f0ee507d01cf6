import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from budgetmode.errors import OutOfGroupRange, ParseError, ValidationError
from budgetmode.rewards import (
    ModeRewardConfig,
    composite_reward,
    count_leaks,
    detect_leak,
    extract_final_answer,
    leak_reward,
    length_lambda,
    length_reward,
    load_keywords,
    normalize_answer,
    score_group,
    task_reward,
)
from budgetmode.traces import MODES, Mode, ReasoningTrace, parse_trace

LEAK_CASE = "But wait, let's check $d=0$ to $d=100$: that's 101 values of $d$. Total $1+594+6=601$."
CLEAN_CASE = (
    "The solutions are all triples where the variables are permutations of \\(100 + k\\), "
    "\\(100\\), and \\(100 - k\\)."
)


def trace(answer, mode=Mode.HIGH, thinking="x"):
    return ReasoningTrace.build(thinking, answer, mode)


@pytest.mark.parametrize("answer,ref,expected", [
    ("\\(\\boxed{601}\\)", "601", 1),
    ("\\boxed{600}", "601", 0),
    ("I could not decide.", "601", 0),
    ("The answer is 42.", "42", 1),
    ("Answer: $7$", "7", 1),
    ("\\boxed{\\frac{1}{2}}", "\\frac{1}{2}", 1),
    ("first \\boxed{3} then \\boxed{4}", "4", 1),
])
def test_task_reward(answer, ref, expected):
    assert task_reward(trace(answer), ref) == expected


def test_task_reward_is_case_sensitive_and_needs_reference():
    assert task_reward(trace("\\boxed{A}"), "a") == 0
    with pytest.raises(ValidationError):
        task_reward(trace("\\boxed{A}"), "  ")


def test_normalize():
    assert normalize_answer("  \\boxed{ $6$ } ") == "6"
    assert extract_final_answer("nothing here") is None


@pytest.mark.parametrize("n,lo,hi,expected", [
    (100, 100, 500, 0.5), (500, 100, 500, -0.5), (300, 100, 500, 0.0), (200, 100, 500, 0.25),
    (7, 7, 7, 0.0),
])
def test_length_lambda(n, lo, hi, expected):
    assert length_lambda(n, lo, hi) == expected


def test_length_lambda_out_of_range():
    with pytest.raises(OutOfGroupRange):
        length_lambda(99, 100, 500)


@pytest.mark.parametrize("lam,task,expected", [(0.5, 1, 0.5), (0.5, 0, 0.0), (-0.3, 0, -0.3), (-0.3, 1, -0.3)])
def test_length_reward(lam, task, expected):
    assert length_reward(lam, task) == expected


@pytest.mark.parametrize("text,leak", [
    (LEAK_CASE, True),
    (CLEAN_CASE, False),
    ("The waiter served dinner.", False),
    ("WAIT. Recheck.", True),
    ("let   me\nthink about it", True),
    ("Actually-correct", True),
    ("actuality", False),
    ("", False),
])
def test_detect_leak(text, leak):
    assert detect_leak(text) is leak


def test_leak_reward_values():
    assert leak_reward(LEAK_CASE) == -0.5
    assert leak_reward(CLEAN_CASE) == 0.5
    assert leak_reward("") == 0.5
    assert count_leaks("Wait, however, wait") == 3


def test_leak_only_checks_answer_section():
    t = parse_trace("<think>Wait, actually no.</think>\\boxed{1}", Mode.LOW)
    r = composite_reward(t, "1", (t.total_tokens, t.total_tokens))
    assert r.leak == 0.5


@pytest.mark.parametrize("task,lam,mode,leaked,expected", [
    (1, 0.5, Mode.LOW, False, 2.0),
    (1, 0.5, Mode.HIGH, True, 0.5),
    (0, -0.5, Mode.MEDIUM, False, 0.25),
])
def test_composite_examples(task, lam, mode, leaked, expected):
    got = composite_reward_for(task, lam, mode, leaked)
    assert got.total == expected


def composite_reward_for(task, lam, mode, leaked):
    # One thinking token, filler answer words and a boxed final answer; a
    # group spanning lengths 3..7 puts 3, 5 and 7 at lambda 0.5, 0 and -0.5.
    length = {0.5: 3, 0.0: 5, -0.5: 7}[lam]
    words = ["w"] * (length - 2)
    if leaked:
        words[0] = "Wait"
    final = "\\boxed{1}" if task else "\\boxed{2}"
    t = ReasoningTrace.build("x", " ".join(words + [final]), mode)
    assert t.total_tokens == length
    return composite_reward(t, "1", (3, 7))


def test_composite_nine_combinations():
    cfg = ModeRewardConfig()
    for task, mode, lam in itertools.product((0, 1), MODES, (-0.5, 0.0, 0.5)):
        for leaked in (False, True):
            got = composite_reward_for(task, lam, mode, leaked)
            assert got.total == oracles.composite_total(task, lam, cfg.alpha(mode), leaked)
            assert got.total == got.task + got.alpha * got.length + got.leak
            if task == 0:
                assert got.length <= 0


def test_leak_disabled_zeroes_component():
    t = trace("Wait \\boxed{1}", Mode.LOW)
    r = composite_reward(t, "1", (t.total_tokens, t.total_tokens), ModeRewardConfig(leak_enabled=False))
    assert r.leak == 0.0 and r.total == 1.0


def test_score_group_bounds_from_group():
    ts = [trace("\\boxed{1}", Mode.LOW, thinking=" ".join("s" * n)) for n in (1, 3, 5)]
    lams = [r.lam for r in score_group(ts, "1")]
    assert lams == [0.5, 0.0, -0.5]


groups = st.lists(st.integers(0, 10**6), min_size=2, max_size=16)


@given(groups)
def test_lambda_matches_exact_oracle(lens):
    lo, hi = min(lens), max(lens)
    for n in lens:
        assert abs(length_lambda(n, lo, hi) - float(oracles.lam(n, lo, hi))) <= 1e-12


@given(groups, st.integers(1, 1000), st.integers(-1000, 1000))
def test_lambda_affine_invariance(lens, scale, shift):
    lo, hi = min(lens), max(lens)
    moved = [n * scale + shift + 10**4 for n in lens]
    mlo, mhi = min(moved), max(moved)
    for n, m in zip(lens, moved):
        assert abs(length_lambda(n, lo, hi) - length_lambda(m, mlo, mhi)) <= 1e-12


@given(groups)
def test_lambda_strictly_decreasing(lens):
    lo, hi = min(lens), max(lens)
    distinct = sorted(set(lens))
    vals = [length_lambda(n, lo, hi) for n in distinct]
    assert all(a > b for a, b in zip(vals, vals[1:]))


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 40)), min_size=2, max_size=8))
def test_high_mode_ignores_length(members):
    ts = [trace(("\\boxed{1}" if ok else "\\boxed{2}"), Mode.HIGH, thinking=" ".join("s" * (n + 1)))
          for ok, n in members]
    for r in score_group(ts, "1"):
        assert r.total == r.task + r.leak


def test_keyword_file(tmp_path):
    p = tmp_path / "kw.txt"
    p.write_text("# transitions\nHmm\n\nlet me see  # trailing\n", encoding="utf-8")
    kws = load_keywords(p)
    assert kws == ("Hmm", "let me see")
    cfg = ModeRewardConfig(leak_keywords=kws)
    assert detect_leak("hmm.", cfg) and detect_leak("Let me see", cfg)
    assert not detect_leak("Wait", cfg)
    p.write_text("# nothing\n", encoding="utf-8")
    with pytest.raises(ParseError):
        load_keywords(p)


def test_config_validation():
    with pytest.raises(ValidationError):
        ModeRewardConfig(alpha_low=-1)
    with pytest.raises(ValidationError):
        ModeRewardConfig(leak_keywords=())

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from promptgym import (
    Course,
    MockEntry,
    MockProvider,
    TestStatus,
    Verdict,
    build_full_prompt,
    feedback_for,
    word_count,
)
from promptgym.errors import (
    EmptyStudentText,
    IndexOutOfRange,
    LockedProblem,
    PromptTooLong,
    ProviderTimeout,
    SandboxSetupFailure,
    UnknownUser,
)
from promptgym.grading import measure_robustness
from promptgym.sandbox import EvaluationResult, TestOutcome
from promptgym.storage import progress_from_log

from conftest import (
    FAST_LIMITS,
    FakeExecutor,
    engine_with,
    fresh_user,
    make_course,
    make_problem,
    provider_for,
)

LISTING_PROMPT = (
    "Write me a Python program that takes five decimal number separated by "
    "spaces, and outputs the average of the 3 median numbers rounded to 2dp."
)


class TestWordCount:
    def test_listing_successful_prompt_is_25_words(self):
        assert word_count(LISTING_PROMPT) == 25

    def test_shortest_initials_prompt_is_12_words(self):
        assert word_count(
            "I want a function called initials which returns initials of the sentence"
        ) == 12

    def test_whitespace_tokenization_of_16_word_prompt(self):
        # tokenizes to 15 because repeat(list) is a single token
        assert word_count(
            "Write me a Python3 function called repeat(list) which repeats "
            "the value according to its value"
        ) == 15

    def test_empty(self):
        assert word_count("") == 0

    @settings(max_examples=100, deadline=None)
    @given(a=st.text(min_size=1), b=st.text(min_size=1))
    def test_concatenation_is_additive(self, a, b):
        assert word_count(a + " " + b) == word_count(a) + word_count(b)


def failing_result(*failing_ids, passing_ids=()):
    outcomes = [
        TestOutcome(tid, TestStatus.PASS, "same", "same") for tid in passing_ids
    ] + [
        TestOutcome(tid, TestStatus.WRONG_OUTPUT, f"expected-{tid}", f"actual-{tid}")
        for tid in failing_ids
    ]
    return EvaluationResult.from_outcomes(outcomes)


class TestFeedback:
    def test_success_message(self):
        result = EvaluationResult.from_outcomes(
            [TestOutcome("t1", TestStatus.PASS, "x", "x")]
        )
        message = feedback_for(result)
        assert "Success" in message
        assert "next" in message

    def test_only_first_failure_shown(self):
        result = failing_result("tid002", "tid003", passing_ids=["tid001"])
        message = feedback_for(result)
        assert "tid002" in message
        assert "expected-tid002" in message
        assert "actual-tid002" in message
        assert "tid003" not in message

    def test_generation_error_message(self):
        result = EvaluationResult(Verdict.GENERATION_ERROR, (), None)
        assert "revise" in feedback_for(result).lower()

    @settings(max_examples=80, deadline=None)
    @given(
        n_pass=st.integers(min_value=0, max_value=4),
        n_fail=st.integers(min_value=1, max_value=4),
    )
    def test_confidentiality_never_leaks_other_tests(self, n_pass, n_fail):
        passing = [f"tid{i:03d}" for i in range(n_pass)]
        failing = [f"tid{i:03d}" for i in range(n_pass, n_pass + n_fail)]
        message = feedback_for(failing_result(*failing, passing_ids=passing))
        for other in passing + failing[1:]:
            assert other not in message


class TestAccessControl:
    def test_fresh_user_can_only_access_first(self, store, fake_executor):
        course = make_course(3)
        engine = engine_with(course, MockProvider({}), fake_executor, store)
        user = fresh_user(store)
        assert engine.can_access(user, course.course_id, 0) is True
        assert engine.can_access(user, course.course_id, 1) is False
        assert engine.can_access(user, course.course_id, 2) is False

    def test_pass_unlocks_next(self, store, fake_executor):
        course = make_course(3)
        provider = MockProvider({}, by_problem={
            p.problem_id: MockEntry("print('PASS')") for p in course.problems
        })
        engine = engine_with(course, provider, fake_executor, store)
        user = fresh_user(store)
        engine.submit(user, course.course_id, 0, "solve it")
        assert engine.can_access(user, course.course_id, 1) is True
        assert engine.can_access(user, course.course_id, 2) is False

    def test_invalid_index(self, store, fake_executor):
        course = make_course(2)
        engine = engine_with(course, MockProvider({}), fake_executor, store)
        user = fresh_user(store)
        with pytest.raises(IndexOutOfRange):
            engine.can_access(user, course.course_id, 2)


class TestSubmit:
    def test_end_to_end_pass_on_function_problem(self, sample_course, store, executor,
                                                 solutions, clock):
        # pipeline check against the extract-first-letters problem with its
        # real reference solution fed through the mock provider
        mini = Course(
            course_id="mini",
            title="Slice",
            problems=(sample_course.problems[4], sample_course.problems[5]),
            root=sample_course.root,
        )
        provider = provider_for(mini, {
            ("cs2-2", "initials which returns the initials"): solutions["cs2-2"],
        })
        engine = engine_with(mini, provider, executor, store, clock=clock, limits=FAST_LIMITS)
        user = fresh_user(store)

        submission = engine.submit(user, "mini", 0, "initials which returns the initials")
        assert submission.result.verdict is Verdict.PASS
        assert submission.attempt_number == 1
        assert submission.generated.source_code == solutions["cs2-2"].rstrip()
        assert engine.can_access(user, "mini", 1) is True
        assert submission.full_prompt.startswith("Write a Python function called")

    def test_locked_problem_rejected(self, store, fake_executor):
        course = make_course(3)
        engine = engine_with(course, MockProvider({}), fake_executor, store)
        user = fresh_user(store)
        with pytest.raises(LockedProblem):
            engine.submit(user, course.course_id, 2, "anything")
        assert store.query_submissions() == []

    def test_empty_student_text(self, store, fake_executor):
        course = make_course(1)
        engine = engine_with(course, MockProvider({}), fake_executor, store)
        user = fresh_user(store)
        with pytest.raises(EmptyStudentText):
            engine.submit(user, course.course_id, 0, "   \n ")

    def test_prompt_too_long_fails_before_generation(self, store, fake_executor):
        course = make_course(1)
        problem = make_problem(
            prompt_prefix="Write me a Python program that",
            max_prompt_words=20,
        )
        course = Course(course.course_id, course.title, (problem,), course.root)
        calls = []

        class CountingProvider:
            def generate(self, request):
                calls.append(request)
                raise AssertionError("should not be called")

        engine = engine_with(course, CountingProvider(), fake_executor, store)
        user = fresh_user(store)
        student_part = LISTING_PROMPT.removeprefix("Write me a Python program that ")
        with pytest.raises(PromptTooLong) as info:
            engine.submit(user, course.course_id, 0, student_part)
        assert info.value.limit == 20
        assert info.value.actual == 25
        assert calls == []
        assert store.query_submissions() == []

    def test_unknown_user(self, store, fake_executor):
        course = make_course(1)
        engine = engine_with(course, MockProvider({}), fake_executor, store)
        with pytest.raises(UnknownUser):
            engine.submit("ghost", course.course_id, 0, "hi")

    def test_word_count_covers_prefix(self, store, fake_executor):
        course = make_course(1)
        provider = MockProvider({}, by_problem={"p1": MockEntry("print('PASS')")})
        engine = engine_with(course, provider, fake_executor, store)
        user = fresh_user(store)
        submission = engine.submit(user, course.course_id, 0, "does things")
        # "Write a Python program that" (5) + "does things" (2)
        assert submission.word_count == 7
        assert submission.word_count == word_count(submission.full_prompt)

    def test_generation_error_recorded_on_prose_response(self, store, fake_executor):
        course = make_course(1)
        provider = MockProvider({}, by_problem={
            "p1": MockEntry("I cannot help with that, sorry to say.")
        })
        engine = engine_with(course, provider, fake_executor, store)
        user = fresh_user(store)
        submission = engine.submit(user, course.course_id, 0, "please")
        assert submission.result.verdict is Verdict.GENERATION_ERROR
        assert submission.generated is None
        record = store.query_submissions()[0]
        assert record["verdict"] == "generation_error"
        assert record["generated_code"] is None

    def test_unknown_prompt_recorded_as_generation_error(self, store, fake_executor):
        course = make_course(1)
        engine = engine_with(course, MockProvider({}), fake_executor, store)
        user = fresh_user(store)
        submission = engine.submit(user, course.course_id, 0, "novel words")
        assert submission.result.verdict is Verdict.GENERATION_ERROR

    def test_provider_timeout_recorded_then_raised(self, store, fake_executor):
        course = make_course(1)

        class TimingOutProvider:
            def generate(self, request):
                raise ProviderTimeout("upstream died")

        engine = engine_with(course, TimingOutProvider(), fake_executor, store)
        user = fresh_user(store)
        with pytest.raises(ProviderTimeout):
            engine.submit(user, course.course_id, 0, "hello")
        records = store.query_submissions()
        assert len(records) == 1
        assert records[0]["verdict"] == "generation_error"

    def test_sandbox_failure_recorded_as_execution_error(self, store):
        course = make_course(1)

        class BrokenExecutor:
            max_workers = 1

            def run_program_tests(self, *args, **kwargs):
                raise SandboxSetupFailure("no temp space")

            run_function_tests = run_program_tests

        provider = MockProvider({}, by_problem={"p1": MockEntry("print(1)")})
        engine = engine_with(course, provider, BrokenExecutor(), store)
        user = fresh_user(store)
        submission = engine.submit(user, course.course_id, 0, "hello")
        assert submission.result.verdict is Verdict.EXECUTION_ERROR
        assert store.query_submissions()[0]["verdict"] == "execution_error"

    def test_post_success_submissions_allowed_and_recorded(self, store, fake_executor):
        course = make_course(2)
        provider = MockProvider({}, by_problem={"p1": MockEntry("print('PASS')")})
        engine = engine_with(course, provider, fake_executor, store)
        user = fresh_user(store)
        engine.submit(user, course.course_id, 0, "first go")

        provider._by_problem["p1"] = MockEntry("print('broken')")
        later = engine.submit(user, course.course_id, 0, "experiment")
        assert later.result.verdict is Verdict.FAIL
        assert later.attempt_number == 2
        # a later failure never re-locks the next problem
        assert engine.can_access(user, course.course_id, 1) is True

    def test_attempt_numbers_gap_free(self, store, fake_executor, clock):
        course = make_course(1)
        provider = MockProvider({}, by_problem={"p1": MockEntry("print('nope')")})
        engine = engine_with(course, provider, fake_executor, store, clock=clock)
        user = fresh_user(store)
        for _ in range(5):
            engine.submit(user, course.course_id, 0, "try again")
        records = store.query_submissions(user_id=user)
        assert [r["attempt_number"] for r in records] == [1, 2, 3, 4, 5]

    def test_stored_progress_matches_log_replay(self, store, fake_executor, clock):
        course = make_course(3)
        provider = MockProvider({}, by_problem={
            p.problem_id: MockEntry("print('PASS')") for p in course.problems
        })
        engine = engine_with(course, provider, fake_executor, store, clock=clock)
        user = fresh_user(store)
        engine.submit(user, course.course_id, 0, "a")
        engine.submit(user, course.course_id, 1, "b")

        derived = progress_from_log(store.query_submissions(), course)[user]
        stored = store.load_progress(user, course.course_id)
        assert derived == stored


class TestGatingProperty:
    def test_random_submit_access_sequences_never_violate_gating(self, store, fake_executor):
        course = make_course(4)
        provider = MockProvider({}, by_problem={
            p.problem_id: MockEntry("print('PASS')", pass_probability=0.5,
                                    failing_code="print('no')")
            for p in course.problems
        }, seed=3)
        engine = engine_with(course, provider, fake_executor, store)
        users = [fresh_user(store) for _ in range(4)]
        rng = random.Random(123)

        for _ in range(200):
            user = rng.choice(users)
            index = rng.randrange(len(course.problems))
            if rng.random() < 0.5:
                engine.can_access(user, course.course_id, index)
                continue
            try:
                engine.submit(user, course.course_id, index, f"attempt {rng.random():.6f}")
            except LockedProblem:
                pass

        # no submission may exist at index i without passes at 0..i-1
        by_index = {p.problem_id: i for i, p in enumerate(course.problems)}
        for user in users:
            records = store.query_submissions(user_id=user)
            passed = set()
            seen_attempts = {}
            for record in sorted(records, key=lambda r: (r["submitted_at"], r["submission_id"])):
                index = by_index[record["problem_id"]]
                for earlier in range(index):
                    assert course.problems[earlier].problem_id in passed
                if record["verdict"] == "pass":
                    passed.add(record["problem_id"])
                seen_attempts.setdefault(record["problem_id"], []).append(record["attempt_number"])
            for attempts in seen_attempts.values():
                assert sorted(attempts) == list(range(1, len(attempts) + 1))


class TestRobustness:
    def test_deterministic_correct_is_one(self, store, fake_executor):
        course = make_course(1)
        provider = MockProvider({}, by_problem={"p1": MockEntry("print('PASS')")})
        engine = engine_with(course, provider, fake_executor, store)
        assert engine.robustness(course.course_id, "p1", "some prompt", 5) == 1.0

    def test_deterministic_wrong_is_zero(self, store, fake_executor):
        course = make_course(1)
        provider = MockProvider({}, by_problem={"p1": MockEntry("print('wrong')")})
        engine = engine_with(course, provider, fake_executor, store)
        assert engine.robustness(course.course_id, "p1", "some prompt", 5) == 0.0

    def test_provider_errors_count_as_failures(self, fake_executor):
        problem = make_problem()

        class FlakyProvider:
            def __init__(self):
                self.n = 0

            def generate(self, request):
                self.n += 1
                if request.attempt_nonce % 2 == 0:
                    raise ProviderTimeout("flaky")
                from promptgym import GeneratedProgram
                return GeneratedProgram("print('PASS')", "print('PASS')")

        fraction = measure_robustness(problem, "text", 10, FlakyProvider(), fake_executor)
        assert fraction == 0.5

    def test_does_not_touch_submission_log_or_progress(self, store, fake_executor):
        course = make_course(2)
        provider = MockProvider({}, by_problem={"p1": MockEntry("print('PASS')")})
        engine = engine_with(course, provider, fake_executor, store)
        user = fresh_user(store)
        engine.robustness(course.course_id, "p1", "prompt", 8)
        assert store.query_submissions() == []
        assert store.load_progress(user, course.course_id).solved == frozenset()

    def test_stochastic_fraction_tracks_probability(self, store, fake_executor):
        course = make_course(1)
        provider = MockProvider({}, by_problem={
            "p1": MockEntry("print('PASS')", pass_probability=0.7,
                            failing_code="print('no')")
        }, seed=42)
        engine = engine_with(course, provider, fake_executor, store)
        fraction = engine.robustness(course.course_id, "p1", "the prompt", 1000)
        assert 0.65 <= fraction <= 0.75

    def test_k_must_be_positive(self, fake_executor):
        problem = make_problem()
        with pytest.raises(ValueError):
            measure_robustness(problem, "x", 0, MockProvider({}), fake_executor)

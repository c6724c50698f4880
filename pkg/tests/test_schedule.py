"""Tests for noise schedules"""

import numpy as np
import pytest

from src.schedule import NoiseSchedule, make_linear_schedule, respace_schedule, respace_steps


def schedule_from_gammas(gammas):
    gammas = np.asarray(gammas, dtype=np.float64)
    previous = np.concatenate(([1.0], gammas[:-1]))
    return NoiseSchedule(alphas=gammas / previous, gammas=gammas)


class TestLinearSchedule:
    def test_single_step(self):
        """Should give alpha = gamma = 1 - beta for T = 1"""
        schedule = make_linear_schedule(1, 0.1, 0.1)

        assert schedule.T == 1
        assert schedule.alpha(1) == pytest.approx(0.9)
        assert schedule.gamma(1) == pytest.approx(0.9)

    def test_gamma_is_cumulative_product(self):
        """Should match an independent running product at T = 500"""
        schedule = make_linear_schedule(500)
        betas = np.linspace(1e-4, 0.02, 500)
        product = 1.0
        for beta in betas:
            product *= 1.0 - beta

        assert schedule.gamma(500) == pytest.approx(product, rel=1e-10)

    def test_strictly_decreasing(self):
        """Should produce strictly decreasing gammas in (0, 1)"""
        gammas = make_linear_schedule(200).gammas

        assert np.all(np.diff(gammas) < 0)
        assert 0.0 < gammas[-1] and gammas[0] < 1.0

    @pytest.mark.parametrize(
        ("T", "start", "end"), [(0, 1e-4, 0.02), (10, 1e-4, 1.0), (10, 0.0, 0.02), (10, 0.1, 0.05)]
    )
    def test_invalid_parameters(self, T, start, end):
        """Should reject T < 1 and betas outside 0 < start <= end < 1"""
        with pytest.raises(ValueError):
            make_linear_schedule(T, start, end)

    def test_step_out_of_range(self):
        """Should reject t outside [1, T]"""
        schedule = make_linear_schedule(10)

        with pytest.raises(ValueError):
            schedule.alpha(0)
        with pytest.raises(ValueError):
            schedule.gamma(11)

    def test_arrays_read_only(self):
        """Should freeze the stored arrays"""
        schedule = make_linear_schedule(10)

        with pytest.raises(ValueError):
            schedule.gammas[0] = 0.5


class TestNoiseScheduleValidation:
    def test_rejects_inconsistent_gammas(self):
        """Should require gammas to be the product of alphas"""
        with pytest.raises(ValueError, match="cumulative"):
            NoiseSchedule(alphas=np.array([0.9, 0.9]), gammas=np.array([0.9, 0.8]))

    def test_rejects_alpha_of_one(self):
        """Should require alpha strictly below 1"""
        with pytest.raises(ValueError):
            NoiseSchedule(alphas=np.array([1.0]), gammas=np.array([1.0]))


class TestRespace:
    def test_identity(self):
        """Should return the schedule unchanged when T_eval = T"""
        schedule = make_linear_schedule(10)

        assert respace_schedule(schedule, 10) is schedule

    def test_halving_example(self):
        """Should keep gamma at steps 2 and 4 and derive the alphas"""
        schedule = schedule_from_gammas([0.9, 0.8, 0.7, 0.6])

        respaced = respace_schedule(schedule, 2)

        np.testing.assert_allclose(respaced.gammas, [0.8, 0.6], rtol=1e-12)
        np.testing.assert_allclose(respaced.alphas, [0.8, 0.75], rtol=1e-12)

    def test_always_ends_at_T(self):
        """Should include the final original step"""
        for T_eval in range(1, 37):
            assert respace_steps(37, T_eval)[-1] == 37

    def test_keeps_gamma_trajectory(self):
        """Should keep decreasing gammas drawn from the original schedule"""
        schedule = make_linear_schedule(100)
        for T_eval in (1, 7, 33, 99):
            respaced = respace_schedule(schedule, T_eval)

            assert respaced.T == T_eval
            assert np.all(np.isin(respaced.gammas, schedule.gammas))
            assert respaced.gamma(T_eval) == schedule.gamma(100)

    @pytest.mark.parametrize("T_eval", [0, 11])
    def test_out_of_range(self, T_eval):
        """Should reject T_eval outside [1, T]"""
        with pytest.raises(ValueError):
            respace_schedule(make_linear_schedule(10), T_eval)

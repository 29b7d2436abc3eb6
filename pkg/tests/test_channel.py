import numpy as np
import pytest

from mcdet.channel import (
    InvalidConfigError,
    SimConfig,
    emit,
    init_sim,
    load_trace,
    run_sequence,
    save_trace,
    step,
)

# Small, fast channel used when the physics itself is not under test.
FAST = SimConfig(
    n_per_bit=50,
    d_mol=3e-11,
    d_tx=1e-16,
    d_rx=4e-16,
    k_b=0.01,
    t_phys=0.1,
    t_b=2.0,
    domain_side=3e-4,
    tx_init=(1.7e-4, 1.5e-4, 1.5e-4),
    rx_init=(1.5e-4, 1.5e-4, 1.5e-4),
    rng_seed=42,
)


class TestConfigValidation:
    def test_default_config_is_valid(self):
        SimConfig().validate()

    def test_default_init_has_no_molecules(self):
        state = init_sim(SimConfig())
        assert state.bound_count == 0
        assert state.free_count == 0
        assert state.time == 0.0

    def test_micro_step_coarser_than_sampling_rejected(self):
        with pytest.raises(InvalidConfigError, match="t_phys"):
            init_sim(SimConfig(t_phys=0.2, t_sample=0.1))

    @pytest.mark.parametrize(
        "field,value",
        [
            ("n_per_bit", 0),
            ("d_mol", -1e-9),
            ("d_tx", 0.0),
            ("k_f", -1.0),
            ("k_b", 0.0),
            ("rx_radius", -5e-6),
            ("t_b", 0.0),
        ],
    )
    def test_nonpositive_values_rejected_with_field_name(self, field, value):
        with pytest.raises(InvalidConfigError, match=field):
            SimConfig(**{field: value}).validate()

    def test_receiver_must_fit_in_domain(self):
        with pytest.raises(InvalidConfigError, match="rx_radius"):
            SimConfig(rx_radius=1.2e-4, domain_side=2e-4).validate()

    def test_transmitter_must_start_outside_receiver(self):
        cfg = SimConfig(
            tx_init=(1e-4, 1e-4, 1e-4), rx_init=(1e-4 + 1e-6, 1e-4, 1e-4)
        )
        with pytest.raises(InvalidConfigError, match="tx_init"):
            cfg.validate()

    def test_symbol_interval_must_be_sample_multiple(self):
        with pytest.raises(InvalidConfigError, match="t_sample"):
            SimConfig(t_b=0.25, t_sample=0.1).validate()


class TestEmit:
    def test_zero_emission_is_noop(self):
        state = init_sim(FAST)
        emit(state, 0)
        assert state.free_count == 0
        assert state.emitted == 0

    def test_default_burst_size_adds_exactly_2000(self):
        state = init_sim(SimConfig())
        emit(state, 2000)
        assert state.free_count == 2000
        assert state.emitted == 2000

    def test_two_emissions_are_additive(self):
        state = init_sim(FAST)
        emit(state, 100)
        emit(state, 100)
        assert state.emitted == 200
        state.check_conservation()

    def test_molecules_appear_at_transmitter(self):
        state = init_sim(FAST)
        emit(state, 5)
        assert np.allclose(state.free_pos, state.tx_pos)


class TestStep:
    def test_empty_channel_still_moves_walkers(self):
        state = init_sim(FAST)
        tx0, rx0 = state.tx_pos.copy(), state.rx_pos.copy()
        step(state)
        assert not np.array_equal(state.tx_pos, tx0)
        assert not np.array_equal(state.rx_pos, rx0)
        assert state.free_count == 0

    def test_no_binding_when_forward_rate_zero(self):
        # Molecules emitted right next to the receiver never bind with k_f -> 0.
        cfg = SimConfig(
            n_per_bit=200,
            k_f=1e-30,
            d_mol=3e-11,
            t_phys=0.1,
            t_b=2.0,
            domain_side=3e-4,
            tx_init=(1.56e-4, 1.5e-4, 1.5e-4),
            rx_init=(1.5e-4, 1.5e-4, 1.5e-4),
            rng_seed=0,
        )
        state = init_sim(cfg)
        emit(state, 200)
        for _ in range(50):
            step(state)
        assert state.bound_count == 0

    def test_conservation_through_bind_unbind_cycles(self):
        state = init_sim(FAST)
        emit(state, 300)
        bound_seen = 0
        for _ in range(200):
            step(state)
            state.check_conservation()
            bound_seen = max(bound_seen, state.bound_count)
        assert bound_seen > 0, "expected some binding in this geometry"

    def test_containment_all_positions_inside_cube(self):
        state = init_sim(FAST)
        emit(state, 500)
        for _ in range(100):
            step(state)
        assert np.all(state.free_pos >= 0)
        assert np.all(state.free_pos <= FAST.domain_side)
        assert np.all(state.tx_pos >= 0) and np.all(state.tx_pos <= FAST.domain_side)
        assert np.all(state.rx_pos >= 0) and np.all(state.rx_pos <= FAST.domain_side)

    def test_same_seed_gives_bit_identical_states(self):
        a = init_sim(FAST)
        b = init_sim(FAST)
        emit(a, 100)
        emit(b, 100)
        for _ in range(50):
            step(a)
            step(b)
        assert np.array_equal(a.free_pos, b.free_pos)
        assert np.array_equal(a.bound_dir, b.bound_dir)
        assert np.array_equal(a.rx_pos, b.rx_pos)
        assert a.bound_count == b.bound_count


class TestDiffusionLaw:
    def test_ensemble_msd_matches_6dt(self):
        # Free diffusion oracle: MSD(t) = 6 D t.  Use a huge domain so no
        # molecule reaches a wall, and disable binding by distance.
        d_mol = 1.01e-9
        cfg = SimConfig(
            n_per_bit=10_000,
            d_mol=d_mol,
            domain_side=1.0,
            t_phys=1e-3,
            t_b=1.0,
            t_sample=0.1,
            tx_init=(0.5, 0.5, 0.5),
            rx_init=(0.25, 0.25, 0.25),
            rng_seed=123,
        )
        state = init_sim(cfg)
        emit(state, 10_000)
        start = state.free_pos.copy()
        n_steps = 1000
        for _ in range(n_steps):
            step(state)
        t = n_steps * cfg.t_phys
        msd = float(np.mean(np.sum((state.free_pos - start) ** 2, axis=1)))
        expected = 6.0 * d_mol * t
        assert abs(msd - expected) / expected < 0.05

    def test_msd_scales_linearly_in_time(self):
        d_mol = 1.01e-9
        cfg = SimConfig(
            n_per_bit=8000,
            d_mol=d_mol,
            domain_side=1.0,
            t_phys=1e-3,
            t_b=1.0,
            tx_init=(0.5, 0.5, 0.5),
            rx_init=(0.25, 0.25, 0.25),
            rng_seed=7,
        )
        state = init_sim(cfg)
        emit(state, 8000)
        start = state.free_pos.copy()
        msds = []
        for _ in range(3):
            for _ in range(250):
                step(state)
            msds.append(float(np.mean(np.sum((state.free_pos - start) ** 2, axis=1))))
        ratios = np.array(msds) / (6 * d_mol * np.array([0.25, 0.5, 0.75]))
        assert np.all(np.abs(ratios - 1.0) < 0.06)


class TestRunSequence:
    def test_all_zero_bits_record_zero_occupancy(self):
        trace = run_sequence(FAST, [0, 0, 0, 0])
        assert np.all(trace.counts == 0)

    def test_sample_count_arithmetic(self):
        cfg = SimConfig(
            n_per_bit=20,
            d_mol=3e-11,
            t_phys=0.1,
            t_b=10.0,
            domain_side=3e-4,
            rng_seed=1,
        )
        trace = run_sequence(cfg, np.ones(10, dtype=int))
        assert len(trace.counts) == 10 * 100
        assert trace.times[0] == pytest.approx(0.1)
        assert trace.times[-1] == pytest.approx(100.0)

    def test_single_pulse_rises_then_decays(self):
        # Impulse-response shape: occupancy climbs after the burst and the
        # late tail falls well below the early peak.  Unbinding (20 s dwell)
        # is fast relative to the interval, so the tail must come down.
        cfg = SimConfig(
            n_per_bit=800,
            d_mol=3e-11,
            d_tx=1e-16,
            d_rx=4e-16,
            k_b=0.2,
            t_phys=0.1,
            t_b=100.0,
            domain_side=1.5e-3,
            tx_init=(7.8e-4, 7.5e-4, 7.5e-4),
            rx_init=(7.5e-4, 7.5e-4, 7.5e-4),
            rng_seed=3,
        )
        trace = run_sequence(cfg, [1])
        assert len(trace.counts) == 1000
        peak_idx = int(np.argmax(trace.counts))
        peak = trace.counts[peak_idx]
        assert peak > 20, "pulse should produce a clear occupancy peak"
        assert 0 < peak_idx < 600, "peak should arrive well before the interval ends"
        tail = trace.counts[-50:].mean()
        assert tail < 0.5 * peak

    def test_determinism_of_full_traces(self):
        bits = [1, 0, 1, 1, 0]
        t1 = run_sequence(FAST, bits)
        t2 = run_sequence(FAST, bits)
        assert np.array_equal(t1.counts, t2.counts)

    def test_empty_bits_rejected(self):
        with pytest.raises(ValueError):
            run_sequence(FAST, [])

    def test_non_binary_bits_rejected(self):
        with pytest.raises(ValueError):
            run_sequence(FAST, [0, 2, 1])

    def test_monotone_isi_trend_in_symbol_interval(self):
        # Averaged over seeds, time-averaged occupancy over a fixed-length
        # random sequence does not increase when symbols get longer: with
        # longer intervals more of each pulse decays before the next one.
        rng = np.random.default_rng(0)
        means = {t_b: [] for t_b in (2.0, 8.0)}
        for seed in range(10):
            bits = rng.integers(0, 2, 8)
            bits[0] = 1
            for t_b in means:
                cfg = SimConfig(
                    n_per_bit=60,
                    d_mol=3e-11,
                    d_tx=1e-16,
                    d_rx=4e-16,
                    k_b=0.5,
                    t_phys=0.1,
                    t_b=t_b,
                    domain_side=3e-4,
                    tx_init=(1.6e-4, 1.5e-4, 1.5e-4),
                    rx_init=(1.5e-4, 1.5e-4, 1.5e-4),
                    rng_seed=1000 + seed,
                )
                means[t_b].append(run_sequence(cfg, bits).counts.mean())
        assert np.mean(means[2.0]) >= np.mean(means[8.0])


class TestTraceSerialization:
    def test_round_trip(self, tmp_path):
        trace = run_sequence(FAST, [1, 0, 1])
        path = save_trace(trace, tmp_path / "t.csv")
        loaded = load_trace(path)
        assert np.array_equal(loaded.counts, trace.counts)
        assert np.allclose(loaded.times, trace.times)
        assert np.array_equal(loaded.bits, trace.bits)
        assert loaded.t_b == trace.t_b
        assert loaded.config == trace.config

    def test_csv_is_byte_identical_for_same_seed(self, tmp_path):
        p1 = save_trace(run_sequence(FAST, [1, 0]), tmp_path / "a.csv")
        p2 = save_trace(run_sequence(FAST, [1, 0]), tmp_path / "b.csv")
        assert p1.read_bytes() == p2.read_bytes()

    def test_csv_header(self, tmp_path):
        path = save_trace(run_sequence(FAST, [1]), tmp_path / "t.csv")
        assert path.read_text().splitlines()[0] == "time_s,bound_count"

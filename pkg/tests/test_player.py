import math

import numpy as np
import pytest

from ldabs.abr import Policy, make_policy
from ldabs.diffusion import ChannelModel
from ldabs.latency import LatencyProfile
from ldabs.media import BitrateLadder, ChunkManifest, generate_manifest
from ldabs.player import (
    PlayerState,
    SemanticContext,
    SessionError,
    advance_buffer,
    observe,
    run_session,
    session_env,
    step,
)
from ldabs.qoe import QoEWeights, session_aggregate
from ldabs.trace import parse_trace, synth_trace

CONST = parse_trace("0 1.0", name="const")


class Fixed(Policy):
    def __init__(self, index):
        self.index = index

    def decide(self, obs, weights):
        return self.index


def small_manifest(K=4):
    return ChunkManifest(BitrateLadder((500, 1000)), 4.0, np.tile([250_000.0, 500_000.0], (K, 1)))


class TestBuffer:
    def test_rebuffer_example(self):
        assert advance_buffer(2.0, 3.0, 4.0, 60.0, first=False) == (1.0, 4.0, 0.0)

    def test_zero_download(self):
        assert advance_buffer(3.0, 0.0, 4.0, 60.0, first=False) == (0.0, 7.0, 0.0)
        assert advance_buffer(58.0, 0.0, 4.0, 60.0, first=False) == (0.0, 60.0, 2.0)

    def test_first_chunk_has_no_rebuffer(self):
        assert advance_buffer(0.0, 5.0, 4.0, 60.0, first=True)[0] == 0.0


class TestStep:
    def test_download_and_history(self):
        man = small_manifest()
        # 250 000 bytes = 2 Mb at 1 Mbps
        state, res = step(PlayerState(), man, CONST, 0)
        assert res.download_time == pytest.approx(2.0)
        assert res.transmitted_bytes == 250_000
        assert state.buffer == pytest.approx(4.0)
        assert state.history == ((1.0, pytest.approx(2.0)),)
        assert state.wall_time == pytest.approx(2.0)

    def test_rebuffer_against_previous_buffer(self):
        man = small_manifest()
        state = PlayerState(buffer=2.0, next_chunk=1, wall_time=10.0)
        state, res = step(state, man, CONST, 1)  # 4 Mb at 1 Mbps
        assert res.rebuffer_seconds == pytest.approx(2.0)
        assert res.buffer_after == pytest.approx(4.0)

    def test_finished(self):
        man = small_manifest(K=1)
        state, _ = step(PlayerState(), man, CONST, 0)
        with pytest.raises(SessionError):
            step(state, man, CONST, 0)

    def test_invalid_choice(self):
        with pytest.raises(SessionError, match="chunk 0"):
            step(PlayerState(), small_manifest(), CONST, 2)

    def test_semantic_tenth_size_on_constant_trace(self):
        man = small_manifest()
        ctx = SemanticContext(sizes=man.sizes * 0.1, latency=LatencyProfile())
        _, plain = step(PlayerState(), man, CONST, 1)
        env = session_env(man, "semantic", ctx, 0)
        _, sem = step(PlayerState(), man, CONST, 1, "semantic", ctx, env)
        lat = ctx.latency_for(man)[1]
        assert sem.download_time == pytest.approx(0.1 * plain.download_time + lat, rel=1e-12)
        assert sem.transmitted_bytes < plain.transmitted_bytes


class TestObserve:
    def test_fresh(self):
        obs = observe(PlayerState(), small_manifest())
        assert obs.past_throughputs == (0.0,) * 8
        assert obs.remaining_fraction == 1.0
        assert obs.next_sizes == (250_000.0, 500_000.0)

    def test_after_one_chunk(self):
        state = PlayerState(next_chunk=1, history=((1.0, 1.2),), last_bitrate_index=0)
        obs = observe(state, small_manifest())
        assert obs.past_throughputs[-1] == 1.0
        assert obs.past_download_times[-1] == 1.2
        assert obs.last_download_time == 1.2

    def test_last_chunk(self):
        assert observe(PlayerState(next_chunk=3), small_manifest()).remaining_fraction == 0.25


class TestRunSession:
    def test_single_chunk(self):
        log = run_session(Fixed(1), small_manifest(K=1), CONST)
        assert len(log) == 1

    def test_steady_state_no_rebuffer(self):
        log = run_session(Fixed(0), small_manifest(K=10), CONST)
        assert all(c.rebuffer_seconds == 0 for c in log.chunks)

    def test_deterministic(self):
        man = generate_manifest(1, K=12)
        tr = synth_trace(2, 120, [(1.0, 0.4), (4.0, 1.0)], 0.2, 1)
        ctx = SemanticContext(csi_jitter_db=2.0)
        a = run_session(make_policy("robustmpc"), man, tr, "semantic", ctx, seed=3)
        b = run_session(make_policy("robustmpc"), man, tr, "semantic", ctx, seed=3)
        assert a == b

    def test_invalid_policy_output(self):
        with pytest.raises(SessionError, match="chunk 0"):
            run_session(Fixed(7), small_manifest(), CONST)

    def test_policy_exception_names_chunk(self):
        class Boom(Policy):
            def decide(self, obs, weights):
                if obs.chunk_index == 2:
                    raise ValueError("nope")
                return 0

        with pytest.raises(SessionError, match="chunk 2"):
            run_session(Boom(), small_manifest(), CONST)

    def test_totals_match_recomputation(self):
        man = generate_manifest(4, K=16)
        tr = synth_trace(5, 100, [(0.8, 0.3), (3.0, 0.5)], 0.3, 1)
        w = QoEWeights()
        log = run_session(make_policy("bola"), man, tr, weights=w)
        agg = session_aggregate(log, w, man.ladder.bitrates_kbps)
        assert agg.totals.total == pytest.approx(log.total_qoe, rel=1e-12, abs=1e-12)

    def test_wall_time_accounting(self):
        man = generate_manifest(6, K=20)
        tr = synth_trace(6, 100, [(2.0, 0.5), (6.0, 1.0)], 0.3, 1)
        log = run_session(make_policy("rate"), man, tr, buffer_cap=12.0)
        expected = math.fsum(c.download_time + c.idle_seconds for c in log.chunks)
        assert log.chunks[-1].wall_time_end == pytest.approx(expected)
        assert all(c.buffer_after <= 12.0 for c in log.chunks)

    def test_semantic_quality_below_one(self):
        man = generate_manifest(0, K=3)
        ctx = SemanticContext(channel=ChannelModel(10.0))
        log = run_session(Fixed(0), man, CONST, "semantic", ctx)
        assert all(0 < c.effective_quality < 1 for c in log.chunks)
        assert all(c.denoise_step > 1 for c in log.chunks)

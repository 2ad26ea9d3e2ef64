#pragma once

// Fixed-step integration of the multi-agent dynamics in synchronous rounds.
// Within one derivative evaluation every agent first publishes its message
// from the stage snapshot, then all agents evaluate their right-hand side
// (possibly concurrently), then the stage is committed. Agents only write
// their own slice, so results do not depend on the evaluation schedule.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>

#include "mtsed/dynamics.hpp"
#include "mtsed/error.hpp"
#include "mtsed/problem.hpp"
#include "mtsed/verify.hpp"

namespace mtsed {

enum class Method { Euler, RK4 };

inline const char* to_string(Method m) { return m == Method::Euler ? "euler" : "rk4"; }

struct IntegratorConfig
{
    Method method = Method::RK4;
    double dt = 1e-3;
    double tol = 1e-5;
    double max_wall_seconds = 180.0;
    std::int64_t max_steps = 0; ///< 0 means no step limit
    std::int64_t trace_every = 1000;
    unsigned threads = 1;
    double kkt_tol = 1e-4;

    void validate() const
    {
        if (!(dt > 0) || !(tol > 0))
            throw std::invalid_argument("integrator: dt and tol must be positive");
        if (!(max_wall_seconds > 0))
            throw std::invalid_argument("integrator: max_wall_seconds must be positive");
        if (max_steps < 0 || trace_every < 1 || threads < 1)
            throw std::invalid_argument("integrator: max_steps >= 0, trace_every >= 1, threads >= 1 required");
    }
};

/// Persistent workers running a statically partitioned loop. Each call
/// returns only after every index has been processed.
class WorkerPool
{
public:
    explicit WorkerPool(unsigned threads) : nthreads_(threads ? threads : 1)
    {
        for (unsigned w = 1; w < nthreads_; ++w)
            workers_.emplace_back([this, w] { loop(w); });
    }

    ~WorkerPool()
    {
        {
            std::lock_guard lock(mu_);
            stop_ = true;
            ++generation_;
        }
        cv_.notify_all();
        for (auto& t : workers_)
            t.join();
    }

    WorkerPool(const WorkerPool&) = delete;
    WorkerPool& operator=(const WorkerPool&) = delete;

    unsigned size() const { return nthreads_; }

    void run(std::size_t count, const std::function<void(std::size_t)>& fn)
    {
        if (nthreads_ == 1 || count < 2) {
            for (std::size_t i = 0; i < count; ++i)
                fn(i);
            return;
        }
        {
            std::lock_guard lock(mu_);
            fn_ = &fn;
            count_ = count;
            pending_ = nthreads_ - 1;
            error_ = nullptr;
            ++generation_;
        }
        cv_.notify_all();
        std::exception_ptr mine;
        try {
            chunk(0, fn, count);
        } catch (...) {
            mine = std::current_exception();
        }
        std::unique_lock lock(mu_);
        done_.wait(lock, [this] { return pending_ == 0; });
        fn_ = nullptr;
        if (mine)
            std::rethrow_exception(mine);
        if (error_)
            std::rethrow_exception(error_);
    }

private:
    void chunk(unsigned w, const std::function<void(std::size_t)>& fn, std::size_t count) const
    {
        const std::size_t begin = count * w / nthreads_, end = count * (w + 1) / nthreads_;
        for (std::size_t i = begin; i < end; ++i)
            fn(i);
    }

    void loop(unsigned w)
    {
        std::uint64_t seen = 0;
        for (;;) {
            const std::function<void(std::size_t)>* fn = nullptr;
            std::size_t count = 0;
            {
                std::unique_lock lock(mu_);
                cv_.wait(lock, [&] { return generation_ != seen; });
                seen = generation_;
                if (stop_)
                    return;
                fn = fn_;
                count = count_;
            }
            std::exception_ptr err;
            try {
                chunk(w, *fn, count);
            } catch (...) {
                err = std::current_exception();
            }
            {
                std::lock_guard lock(mu_);
                if (err && !error_)
                    error_ = err;
                if (--pending_ == 0)
                    done_.notify_one();
            }
        }
    }

    unsigned nthreads_;
    std::vector<std::thread> workers_;
    std::mutex mu_;
    std::condition_variable cv_, done_;
    std::uint64_t generation_ = 0;
    const std::function<void(std::size_t)>* fn_ = nullptr;
    std::size_t count_ = 0;
    unsigned pending_ = 0;
    std::exception_ptr error_;
    bool stop_ = false;
};

/// The set of bus agents with their preallocated inboxes and workspaces.
class AgentNetwork
{
public:
    AgentNetwork(const MtsedProblem& P, unsigned threads = 1)
        : P_(P), layout_(P.layout()), pool_(threads), outbox_(P.buses.size()), inbox_(P.buses.size())
    {
        views_.reserve(P.buses.size());
        for (std::size_t i = 0; i < P.buses.size(); ++i) {
            inbox_[i].resize(P.buses[i].couplings.size());
            views_.emplace_back(layout_.tau);
        }
    }

    const Layout& layout() const { return layout_; }
    const MtsedProblem& problem() const { return P_; }

    /// out = f(s), computed agent by agent from messages.
    void evaluate(const SystemState& s, SystemState& out)
    {
        require_dim(s.data.size() == layout_.total(), "AgentNetwork::evaluate: state dimension mismatch");
        if (out.data.size() != layout_.total())
            out = SystemState(layout_);
        // Round 1: publish.
        for (std::size_t i = 0; i < P_.buses.size(); ++i)
            outbox_[i] = publish(agent_view(s, static_cast<Eigen::Index>(i)), P_.buses[i]);
        // Round 2: each agent reads its inbox and computes its derivative.
        pool_.run(P_.buses.size(), [&](std::size_t i) {
            const BusProblem& bp = P_.buses[i];
            auto& in = inbox_[i];
            for (std::size_t m = 0; m < in.size(); ++m)
                in[m] = outbox_[static_cast<std::size_t>(bp.couplings[m].neighbor)];
            const AgentView me = agent_view(s, static_cast<Eigen::Index>(i));
            projected_view(me, bp, in, views_[i]);
            agent_rhs(me, views_[i], bp, in, agent_view(out, static_cast<Eigen::Index>(i)));
        });
    }

    SystemState evaluate(const SystemState& s)
    {
        SystemState out(layout_);
        evaluate(s, out);
        return out;
    }

private:
    const MtsedProblem& P_;
    Layout layout_;
    WorkerPool pool_;
    std::vector<NeighborMessage> outbox_;
    std::vector<std::vector<NeighborMessage>> inbox_;
    std::vector<ProjectedView> views_;
};

/// Midpoint of every box, theta and multipliers zero. With a seed the primal
/// coordinates are drawn uniformly from their boxes (theta from [-0.5, 0.5]).
inline SystemState init_state(const CompactProblem& cp, std::optional<std::uint64_t> seed = std::nullopt)
{
    SystemState s(cp.layout);
    const auto& lo = cp.omega.lo;
    const auto& hi = cp.omega.hi;
    std::mt19937_64 rng(seed.value_or(0));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (Eigen::Index j = 0; j < cp.layout.nx(); ++j) {
        const bool bounded = std::isfinite(lo[j]) && std::isfinite(hi[j]);
        if (!seed)
            s.data[j] = bounded ? 0.5 * (lo[j] + hi[j]) : 0.0;
        else
            s.data[j] = bounded ? lo[j] + (hi[j] - lo[j]) * u(rng) : u(rng) - 0.5;
    }
    return s;
}

/// Max-norm of the stacked derivative.
inline double residual(const SystemState& s, const CompactProblem& cp)
{
    return compact_rhs(s, cp).data.cwiseAbs().maxCoeff();
}

/// First non-finite entry, reported by bus id and field name.
inline void check_finite(const SystemState& s, const MtsedProblem& P)
{
    if (s.data.allFinite())
        return;
    const Layout& L = s.layout;
    for (Eigen::Index j = 0; j < s.data.size(); ++j) {
        if (std::isfinite(s.data[j]))
            continue;
        const auto blk = static_cast<Layout::Block>(j / L.nt());
        const Eigen::Index bus = (j % L.nt()) / L.tau, k = (j % L.nt()) % L.tau;
        const int id = P.buses[static_cast<std::size_t>(bus)].id;
        throw DivergenceError("non-finite " + std::string(block_name(blk)) + "[" + std::to_string(k + 1) +
                                  "] at bus " + std::to_string(id),
                              id, block_name(blk));
    }
}

/// Advances `s` by one step. `k1` must hold f(s) on entry; `work` is scratch.
struct StepWorkspace
{
    SystemState k2, k3, k4, stage;
};

inline void advance(AgentNetwork& net, SystemState& s, const SystemState& k1, Method method, double dt,
                    StepWorkspace& w)
{
    if (method == Method::Euler) {
        s.data += dt * k1.data;
        return;
    }
    if (w.stage.data.size() != s.data.size())
        w.stage = SystemState(s.layout);
    w.stage.data = s.data + (0.5 * dt) * k1.data;
    net.evaluate(w.stage, w.k2);
    w.stage.data = s.data + (0.5 * dt) * w.k2.data;
    net.evaluate(w.stage, w.k3);
    w.stage.data = s.data + dt * w.k3.data;
    net.evaluate(w.stage, w.k4);
    s.data += (dt / 6.0) * (k1.data + 2.0 * w.k2.data + 2.0 * w.k3.data + w.k4.data);
}

/// One synchronous step through the agent network.
inline SystemState step(AgentNetwork& net, const SystemState& s, Method method, double dt)
{
    SystemState next = s;
    const SystemState k1 = net.evaluate(s);
    StepWorkspace w;
    advance(net, next, k1, method, dt, w);
    check_finite(next, net.problem());
    return next;
}

/// The same step computed from the stacked compact form.
inline SystemState step_compact(const SystemState& s, const CompactProblem& cp, Method method, double dt)
{
    SystemState next = s;
    const SystemState k1 = compact_rhs(s, cp);
    if (method == Method::Euler) {
        next.data += dt * k1.data;
        return next;
    }
    SystemState st = s;
    st.data = s.data + 0.5 * dt * k1.data;
    const SystemState k2 = compact_rhs(st, cp);
    st.data = s.data + 0.5 * dt * k2.data;
    const SystemState k3 = compact_rhs(st, cp);
    st.data = s.data + dt * k3.data;
    const SystemState k4 = compact_rhs(st, cp);
    next.data += (dt / 6.0) * (k1.data + 2.0 * k2.data + 2.0 * k3.data + k4.data);
    return next;
}

struct TraceSample
{
    double t = 0.0;
    double residual = 0.0;
    double lambda_p_norm = 0.0;
    double lambda_q_norm = 0.0;
    double cost = 0.0;
};

struct RunTrace
{
    std::vector<TraceSample> samples;
};

enum class StopReason { Converged, StepLimit, WallTime };

inline const char* to_string(StopReason r)
{
    switch (r) {
    case StopReason::Converged: return "converged";
    case StopReason::StepLimit: return "step_limit";
    case StopReason::WallTime: return "wall_time";
    }
    return "?";
}

struct WindowResult
{
    bool converged = false;
    StopReason stop = StopReason::StepLimit;
    std::int64_t steps = 0;
    double t = 0.0;
    double residual = 0.0;
    double lambda_p_norm = 0.0;
    double lambda_q_norm = 0.0;
    double wall_seconds = 0.0;

    SystemState state; ///< final state, or the best iterate when not converged
    Eigen::VectorXd xt, y, zplus;
    double cost = 0.0; ///< $/h
    KktReport kkt;
    RunTrace trace;
};

/// Called after the initial evaluation and after every step with the step
/// count, algorithm time and state.
using StepObserver = std::function<void(std::int64_t, double, const SystemState&)>;

namespace detail {

inline TraceSample sample(const MtsedProblem& P, const CompactProblem& cp, const SystemState& s,
                          const SystemState& ds, double t, double res)
{
    TraceSample ts;
    ts.t = t;
    ts.residual = res;
    const Eigen::Index nt = cp.layout.nt();
    ts.lambda_p_norm = ds.y().head(nt).cwiseAbs().maxCoeff();
    ts.lambda_q_norm = ds.y().tail(nt).cwiseAbs().maxCoeff();
    ts.cost = total_cost(P, project_box(s.x(), cp.omega));
    return ts;
}

} // namespace detail

inline WindowResult run_window(const MtsedProblem& P, const IntegratorConfig& cfg,
                               std::optional<SystemState> init = std::nullopt, const StepObserver& observer = {})
{
    cfg.validate();
    const CompactProblem cp = compact_matrices(P);
    AgentNetwork net(P, cfg.threads);
    const auto start = std::chrono::steady_clock::now();

    SystemState s = init ? std::move(*init) : init_state(cp);
    require_dim(s.data.size() == cp.layout.total(), "run_window: initial state has wrong dimension");
    check_finite(s, P);

    WindowResult out;
    SystemState k1(cp.layout), best = s;
    StepWorkspace ws;
    double best_res = std::numeric_limits<double>::infinity();
    std::int64_t n = 0;
    double t = 0.0;
    if (observer)
        observer(0, 0.0, s);

    for (;;) {
        net.evaluate(s, k1);
        const double res = k1.data.cwiseAbs().maxCoeff();
        if (res < best_res) {
            best_res = res;
            best = s;
        }
        const bool done = res <= cfg.tol;
        if (n % cfg.trace_every == 0 || done)
            out.trace.samples.push_back(detail::sample(P, cp, s, k1, t, res));
        if (done) {
            out.converged = true;
            out.stop = StopReason::Converged;
            break;
        }
        if (cfg.max_steps > 0 && n >= cfg.max_steps) {
            out.stop = StopReason::StepLimit;
            break;
        }
        if ((n & 255) == 0 && std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >
                                  cfg.max_wall_seconds) {
            out.stop = StopReason::WallTime;
            break;
        }
        advance(net, s, k1, cfg.method, cfg.dt, ws);
        check_finite(s, P);
        ++n;
        t = static_cast<double>(n) * cfg.dt;
        if (observer)
            observer(n, t, s);
    }

    out.steps = n;
    out.t = t;
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.state = out.converged ? s : best;

    const CompactProjection pr = compact_projection(out.state, cp);
    const SystemState d = compact_rhs(out.state, cp);
    out.residual = d.data.cwiseAbs().maxCoeff();
    out.lambda_p_norm = pr.balance.head(cp.layout.nt()).cwiseAbs().maxCoeff();
    out.lambda_q_norm = pr.balance.tail(cp.layout.nt()).cwiseAbs().maxCoeff();
    out.xt = pr.xt;
    out.y = out.state.y();
    out.zplus = pr.zplus;
    out.cost = cp.cost(pr.xt);
    out.kkt = check_kkt(out.xt, out.y, out.zplus, cp, cfg.kkt_tol);
    return out;
}

/// Slot-1 setpoints applied in one receding-horizon window, physical units.
struct AppliedSetpoints
{
    std::vector<int> gen_bus;
    std::vector<double> p_mw, q_mvar;
    std::vector<int> storage_bus;
    std::vector<double> pc_mw, pd_mw;
    std::vector<double> c0_before_mwh, c0_after_mwh;
};

struct MpcWindow
{
    int window = 0;
    WindowResult result;
    bool fallback = false; ///< previous setpoints reused because the solve failed
    AppliedSetpoints applied;
};

struct MpcSchedule
{
    std::vector<MpcWindow> windows;
};

/// Demand forecast for window h (0-based): one profile per loaded bus,
/// each of length tau.
using ForecastFn = std::function<std::vector<DemandProfile>(int)>;

inline MpcSchedule receding_horizon(const NetworkCase& base, const ForecastFn& forecast, const IntegratorConfig& cfg,
                                    int num_windows)
{
    if (num_windows < 1)
        throw std::invalid_argument("receding_horizon: need at least one window");
    NetworkCase cur = base;
    MpcSchedule sched;
    const double To = base.horizon.slot_hours();
    const double S = base.base_mva;

    AppliedSetpoints last;
    bool have_last = false;
    for (int h = 0; h < num_windows; ++h) {
        cur.demand = forecast(h);
        const MtsedProblem P = make_problem(cur);
        const Layout L = P.layout();

        MpcWindow w;
        w.window = h;
        w.result = run_window(P, cfg);
        const bool ok = w.result.converged;
        w.fallback = !ok;

        AppliedSetpoints a;
        for (auto& g : cur.generators) {
            const auto i = static_cast<Eigen::Index>(cur.index_of(g.bus));
            a.gen_bus.push_back(g.bus);
            if (ok) {
                a.p_mw.push_back(S * w.result.xt[L.local(Layout::PG, i, 0)]);
                a.q_mvar.push_back(S * w.result.xt[L.local(Layout::QG, i, 0)]);
            } else if (have_last) {
                const auto idx = a.gen_bus.size() - 1;
                a.p_mw.push_back(last.p_mw[idx]);
                a.q_mvar.push_back(last.q_mvar[idx]);
            } else {
                a.p_mw.push_back(g.p0);
                a.q_mvar.push_back(0.0);
            }
        }
        for (auto& st : cur.storages) {
            const auto i = static_cast<Eigen::Index>(cur.index_of(st.bus));
            a.storage_bus.push_back(st.bus);
            double pc = 0.0, pd = 0.0;
            if (ok) {
                pc = S * w.result.xt[L.local(Layout::PC, i, 0)];
                pd = S * w.result.xt[L.local(Layout::PD, i, 0)];
            } else if (have_last) {
                pc = last.pc_mw[a.storage_bus.size() - 1];
                pd = last.pd_mw[a.storage_bus.size() - 1];
            }
            a.pc_mw.push_back(pc);
            a.pd_mw.push_back(pd);
            a.c0_before_mwh.push_back(st.c0);
            const double next = st.c0 + To * (st.eta_c * pc - pd / st.eta_d);
            // Certified solutions can overshoot a bound by the solver tolerance.
            a.c0_after_mwh.push_back(std::clamp(next, st.c_min, st.c_max));
        }

        for (std::size_t g = 0; g < cur.generators.size(); ++g)
            cur.generators[g].p0 = a.p_mw[g];
        for (std::size_t k = 0; k < cur.storages.size(); ++k)
            cur.storages[k].c0 = a.c0_after_mwh[k];
        last = a;
        have_last = true;
        w.applied = std::move(a);
        sched.windows.push_back(std::move(w));
    }
    return sched;
}

} // namespace mtsed

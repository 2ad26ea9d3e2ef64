// Command-line front end.
//
//   mtsed solve  --case C [--trace t.csv] [--summary s.json] ...
//   mtsed mpc    --case C --windows N ...
//   mtsed oracle --case C [--summary s.json]
//   mtsed verify --case C --solution s.json [--tol F]
//
// Exit codes: 0 success, 1 input error, 2 not converged, 3 certification
// failed, 4 divergence, 5 oracle failure.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mtsed/mtsed.hpp"

#ifndef MTSED_CASE_DIR
#define MTSED_CASE_DIR ""
#endif

namespace {

enum Exit : int { kOk = 0, kInput = 1, kNotConverged = 2, kNotCertified = 3, kDiverged = 4, kOracle = 5 };

struct Options
{
    std::string case_arg;
    std::optional<int> tau;
    std::optional<double> slot_minutes;
    double dt = 1e-3;
    double tol = 1e-5;
    double max_seconds = 180.0;
    std::string method = "rk4";
    std::optional<std::uint64_t> seed;
    std::string trace_path;
    std::string summary_path;
    int windows = 3;
    std::string solution_path;
    std::optional<double> verify_tol;
    std::int64_t trace_every = 1000;
    std::int64_t max_steps = 0;
    unsigned threads = 1;
};

void add_case_options(CLI::App* cmd, Options& o)
{
    cmd->add_option("--case", o.case_arg, "case file, or the name of a bundled case")->required();
    cmd->add_option("--tau", o.tau, "number of slots (demand profiles repeat or truncate)")->check(CLI::PositiveNumber);
    cmd->add_option("--slot-minutes", o.slot_minutes, "slot length in minutes")->check(CLI::PositiveNumber);
    cmd->add_option("--summary", o.summary_path, "write the JSON summary here");
}

void add_integrator_options(CLI::App* cmd, Options& o)
{
    cmd->add_option("--dt", o.dt, "integration step")->check(CLI::PositiveNumber);
    cmd->add_option("--tol", o.tol, "stopping residual")->check(CLI::PositiveNumber);
    cmd->add_option("--max-seconds", o.max_seconds, "wall-clock budget per window")->check(CLI::PositiveNumber);
    cmd->add_option("--method", o.method, "euler or rk4")->check(CLI::IsMember({"euler", "rk4"}));
    cmd->add_option("--seed", o.seed, "random initial point inside the boxes");
    cmd->add_option("--trace", o.trace_path, "write the trace CSV here");
    cmd->add_option("--trace-every", o.trace_every, "steps between trace samples")->check(CLI::PositiveNumber);
    cmd->add_option("--max-steps", o.max_steps, "step limit per window, 0 for none")->check(CLI::NonNegativeNumber);
    cmd->add_option("--threads", o.threads, "threads for agent evaluation")->check(CLI::PositiveNumber);
}

mtsed::NetworkCase load(const Options& o)
{
    auto c = mtsed::load_case(mtsed::resolve_case_path(o.case_arg, MTSED_CASE_DIR));
    if (o.tau || o.slot_minutes)
        c = mtsed::with_horizon(std::move(c), o.tau.value_or(c.horizon.tau),
                                o.slot_minutes.value_or(c.horizon.slot_minutes));
    mtsed::validate_case(c);
    return c;
}

mtsed::IntegratorConfig integrator(const Options& o)
{
    mtsed::IntegratorConfig cfg;
    cfg.method = o.method == "euler" ? mtsed::Method::Euler : mtsed::Method::RK4;
    cfg.dt = o.dt;
    cfg.tol = o.tol;
    cfg.max_wall_seconds = o.max_seconds;
    cfg.max_steps = o.max_steps;
    cfg.trace_every = o.trace_every;
    cfg.threads = o.threads;
    return cfg;
}

void write_file(const std::string& path, const std::string& content)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw mtsed::CaseError("cannot write file", path);
    out << content;
}

void write_json(const std::string& path, const nlohmann::json& j)
{
    if (!path.empty())
        write_file(path, j.dump(2) + "\n");
}

int run_solve(const Options& o)
{
    const auto c = load(o);
    const auto P = mtsed::make_problem(c);
    const auto cp = mtsed::compact_matrices(P);
    const auto cfg = integrator(o);
    std::optional<mtsed::SystemState> init;
    if (o.seed)
        init = mtsed::init_state(cp, *o.seed);
    const auto r = mtsed::run_window(P, cfg, init);

    if (!o.trace_path.empty()) {
        std::ostringstream ss;
        mtsed::write_trace_csv(ss, r.trace);
        write_file(o.trace_path, ss.str());
    }
    write_json(o.summary_path, mtsed::window_summary(P, cp, r, cfg));

    std::printf("%s: %s after %lld steps (t = %.3f, %.2f s), residual %.3e\n", c.name.c_str(),
                mtsed::to_string(r.stop), static_cast<long long>(r.steps), r.t, r.wall_seconds, r.residual);
    std::printf("cost %.6f $/h, worst scaled KKT residual %.3e (%s at %.0e)\n", r.cost, r.kkt.worst_scaled(),
                r.kkt.certified ? "certified" : "not certified", r.kkt.tol);
    if (!r.converged)
        return kNotConverged;
    return r.kkt.certified ? kOk : kNotCertified;
}

int run_mpc(const Options& o)
{
    const auto c = load(o);
    const auto cfg = integrator(o);
    const int tau = c.horizon.tau;
    // Forecast for window h: the case profile advanced by h slots, cyclically.
    auto forecast = [&](int h) {
        auto d = c.demand;
        for (auto& prof : d) {
            auto p = prof.p_mw, q = prof.q_mvar;
            for (int k = 0; k < tau; ++k) {
                prof.p_mw[static_cast<std::size_t>(k)] = p[static_cast<std::size_t>((k + h) % tau)];
                prof.q_mvar[static_cast<std::size_t>(k)] = q[static_cast<std::size_t>((k + h) % tau)];
            }
        }
        return d;
    };
    const auto sched = mtsed::receding_horizon(c, forecast, cfg, o.windows);

    nlohmann::json windows = nlohmann::json::array();
    mtsed::RunTrace all;
    double t_offset = 0.0;
    bool all_ok = true;
    for (const auto& w : sched.windows) {
        const auto& a = w.applied;
        windows.push_back({{"window", w.window},
                           {"converged", w.result.converged},
                           {"fallback", w.fallback},
                           {"iterations", w.result.steps},
                           {"cost", w.result.cost},
                           {"kkt", mtsed::to_json(w.result.kkt)},
                           {"applied",
                            {{"gen_bus", a.gen_bus},
                             {"p_mw", a.p_mw},
                             {"q_mvar", a.q_mvar},
                             {"storage_bus", a.storage_bus},
                             {"pc_mw", a.pc_mw},
                             {"pd_mw", a.pd_mw},
                             {"c0_before_mwh", a.c0_before_mwh},
                             {"c0_after_mwh", a.c0_after_mwh}}},
                           {"timing", mtsed::timing_json(w.result.wall_seconds)}});
        for (auto s : w.result.trace.samples) {
            s.t += t_offset;
            all.samples.push_back(s);
        }
        t_offset += w.result.t + cfg.dt;
        all_ok = all_ok && w.result.converged;
        std::printf("window %d: %s, cost %.6f $/h%s\n", w.window, mtsed::to_string(w.result.stop), w.result.cost,
                    w.fallback ? " (previous setpoints reused)" : "");
    }
    if (!o.trace_path.empty()) {
        std::ostringstream ss;
        mtsed::write_trace_csv(ss, all);
        write_file(o.trace_path, ss.str());
    }
    write_json(o.summary_path, {{"format", "mtsed-mpc/1"}, {"case", c.name}, {"windows", windows}});
    return all_ok ? kOk : kNotConverged;
}

int run_oracle(const Options& o)
{
    const auto c = load(o);
    const auto P = mtsed::make_problem(c);
    const auto cp = mtsed::compact_matrices(P);
    const auto start = std::chrono::steady_clock::now();
    const auto r = mtsed::oracle(cp, o.verify_tol.value_or(1e-6));
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_json(o.summary_path, mtsed::oracle_summary(P, cp, r, wall));
    if (!r.solved()) {
        std::fprintf(stderr, "oracle: %s", mtsed::qp::to_string(r.status));
        if (r.status == mtsed::qp::Status::Infeasible)
            std::fprintf(stderr, " (phase-I violation %.3e)", r.infeasibility);
        std::fprintf(stderr, "\n");
        return kOracle;
    }
    std::printf("%s: oracle cost %.6f $/h after %d iterations, worst scaled KKT residual %.3e\n", c.name.c_str(),
                r.cost, r.iterations, r.kkt.worst_scaled());
    return r.kkt.certified ? kOk : kNotCertified;
}

int run_verify(const Options& o)
{
    const auto c = load(o);
    const auto P = mtsed::make_problem(c);
    const auto cp = mtsed::compact_matrices(P);
    const auto sol = mtsed::read_solution(mtsed::read_text_file(o.solution_path), o.solution_path);
    const auto L = cp.layout;
    if (sol.x.size() != L.nx() || sol.y.size() != L.ny() || sol.z.size() != L.nz())
        throw mtsed::CaseError("solution dimensions do not match the case", o.solution_path);
    const double tol = o.verify_tol.value_or(1e-4);
    const auto k = mtsed::check_kkt(sol.x, sol.y, sol.z, cp, tol);
    const auto f = mtsed::check_feasibility(P, sol.x);
    std::printf("cost %.6f $/h\n", cp.cost(sol.x));
    std::printf("eq %.3e  ineq %.3e  box %.3e  dual %.3e  compl %.3e  stat %.3e  (scaled worst %.3e)\n",
                k.eq_scaled, k.ineq_scaled, k.box_violation, k.dual_negativity, k.complementarity_scaled,
                k.stationarity_scaled, k.worst_scaled());
    std::printf("feasibility worst %.3e p.u. (ramp %.3e, energy %.3e)\n", f.worst(), f.ramp, f.energy);
    std::printf("%s at tol %.1e\n", k.certified ? "certified" : "NOT certified", tol);
    write_json(o.summary_path, {{"kkt", mtsed::to_json(k)}, {"feasibility", mtsed::to_json(f)}});
    return k.certified ? kOk : kNotCertified;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Distributed multi-time-slot economic dispatch"};
    app.require_subcommand(1);
    Options o;

    auto* solve = app.add_subcommand("solve", "run the distributed dynamics on one window");
    add_case_options(solve, o);
    add_integrator_options(solve, o);

    auto* mpc = app.add_subcommand("mpc", "receding-horizon run over several windows");
    add_case_options(mpc, o);
    add_integrator_options(mpc, o);
    mpc->add_option("--windows", o.windows, "number of windows")->check(CLI::PositiveNumber);

    auto* orc = app.add_subcommand("oracle", "centralized interior-point reference solve");
    add_case_options(orc, o);
    orc->add_option("--tol", o.verify_tol, "certification tolerance (default 1e-6)")->check(CLI::PositiveNumber);

    auto* ver = app.add_subcommand("verify", "check a stored solution against the KKT conditions");
    add_case_options(ver, o);
    ver->add_option("--solution", o.solution_path, "summary file holding the solution")->required();
    ver->add_option("--tol", o.verify_tol, "certification tolerance (default 1e-4)")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kInput;
    }

    try {
        if (*solve)
            return run_solve(o);
        if (*mpc)
            return run_mpc(o);
        if (*orc)
            return run_oracle(o);
        return run_verify(o);
    } catch (const mtsed::CaseError& e) {
        std::fprintf(stderr, "error: %s", e.what());
        if (!e.where().empty())
            std::fprintf(stderr, " (%s)", e.where().c_str());
        std::fprintf(stderr, "\n");
        return kInput;
    } catch (const mtsed::DivergenceError& e) {
        std::fprintf(stderr, "diverged: %s\n", e.what());
        return kDiverged;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kInput;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kInput;
    }
}

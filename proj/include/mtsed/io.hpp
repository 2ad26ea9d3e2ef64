#pragma once

// File plumbing: reading case documents, the trace CSV and the JSON run
// summary. The summary carries the full-precision primal and dual vectors so
// that a later `verify` can recheck it without rerunning anything.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "mtsed/network.hpp"
#include "mtsed/problem.hpp"
#include "mtsed/simulator.hpp"
#include "mtsed/verify.hpp"

namespace mtsed {

inline std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw CaseError("cannot open file", path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// A path, or a bare name looked up as `<case_dir>/<name>.json`.
inline std::filesystem::path resolve_case_path(const std::string& arg, const std::filesystem::path& case_dir)
{
    namespace fs = std::filesystem;
    const fs::path p(arg);
    if (fs::exists(p) || p.has_parent_path() || case_dir.empty())
        return p;
    fs::path named = case_dir / p;
    if (!named.has_extension())
        named += ".json";
    return fs::exists(named) ? named : p;
}

inline NetworkCase load_case(const std::filesystem::path& path)
{
    const std::string text = read_text_file(path);
    try {
        return parse_case(text);
    } catch (const CaseError& e) {
        throw CaseError(e.what(), path.string() + ": " + e.where());
    }
}

/// Repeats or truncates every demand profile to `tau` slots.
inline NetworkCase with_horizon(NetworkCase c, int tau, double slot_minutes)
{
    if (tau < 1)
        throw CaseError("tau must be at least 1", "--tau");
    if (!(slot_minutes > 0))
        throw CaseError("slot length must be positive", "--slot-minutes");
    const auto old = static_cast<std::size_t>(c.horizon.tau);
    for (auto& d : c.demand) {
        std::vector<double> p(static_cast<std::size_t>(tau)), q(static_cast<std::size_t>(tau));
        for (std::size_t k = 0; k < p.size(); ++k) {
            p[k] = d.p_mw[k % old];
            q[k] = d.q_mvar[k % old];
        }
        d.p_mw = std::move(p);
        d.q_mvar = std::move(q);
    }
    c.horizon.tau = tau;
    c.horizon.slot_minutes = slot_minutes;
    return c;
}

namespace detail {

inline std::string fmt17(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

inline void write_trace_csv(std::ostream& os, const RunTrace& trace)
{
    os << "t,residual,lambda_p_norm,lambda_q_norm,cost\n";
    for (const auto& s : trace.samples)
        os << detail::fmt17(s.t) << ',' << detail::fmt17(s.residual) << ',' << detail::fmt17(s.lambda_p_norm) << ','
           << detail::fmt17(s.lambda_q_norm) << ',' << detail::fmt17(s.cost) << '\n';
}

inline nlohmann::json to_json(const KktReport& r)
{
    return {{"eq_residual", r.eq_residual},
            {"ineq_violation", r.ineq_violation},
            {"box_violation", r.box_violation},
            {"dual_negativity", r.dual_negativity},
            {"complementarity", r.complementarity},
            {"stationarity", r.stationarity},
            {"simultaneous_charge_discharge", r.simultaneous_charge_discharge},
            {"eq_scaled", r.eq_scaled},
            {"ineq_scaled", r.ineq_scaled},
            {"complementarity_scaled", r.complementarity_scaled},
            {"stationarity_scaled", r.stationarity_scaled},
            {"tol", r.tol},
            {"certified", r.certified}};
}

inline nlohmann::json to_json(const FeasibilityReport& r)
{
    return {{"units", "p.u. (energy in p.u.*h)"},
            {"balance_p", r.balance_p},
            {"balance_q", r.balance_q},
            {"gen_box", r.gen_box},
            {"storage_box", r.storage_box},
            {"voltage_box", r.voltage_box},
            {"ramp", r.ramp},
            {"energy", r.energy},
            {"worst", r.worst()}};
}

inline std::vector<double> to_std(const Eigen::Ref<const Eigen::VectorXd>& v) { return {v.data(), v.data() + v.size()}; }

/// Per-slot tables in physical units: generator outputs and ramp rates,
/// storage powers and the energy trajectory c[0..tau], bus voltages, angles
/// and balance prices.
inline nlohmann::json dispatch_tables(const MtsedProblem& P, const Eigen::Ref<const Eigen::VectorXd>& x,
                                      const Eigen::Ref<const Eigen::VectorXd>& y)
{
    using nlohmann::json;
    const Layout L = P.layout();
    const double S = P.base_mva, To = P.horizon.slot_hours;
    auto series = [&](Layout::Block b, Eigen::Index i, double scale) {
        std::vector<double> out(static_cast<std::size_t>(L.tau));
        for (Eigen::Index k = 0; k < L.tau; ++k)
            out[static_cast<std::size_t>(k)] = scale * x[L.local(b, i, k)];
        return out;
    };

    json gens = json::array(), stores = json::array(), buses = json::array();
    for (const auto& g : P.network.generators) {
        const auto i = static_cast<Eigen::Index>(P.network.index_of(g.bus));
        const auto p = series(Layout::PG, i, S);
        std::vector<double> ramp(p.size());
        double prev = g.p0;
        for (std::size_t k = 0; k < p.size(); ++k) {
            ramp[k] = (p[k] - prev) / To;
            prev = p[k];
        }
        gens.push_back({{"bus", g.bus}, {"p_mw", p}, {"q_mvar", series(Layout::QG, i, S)}, {"ramp_mw_per_h", ramp}});
    }
    for (const auto& s : P.network.storages) {
        const auto i = static_cast<Eigen::Index>(P.network.index_of(s.bus));
        const auto pc = series(Layout::PC, i, S), pd = series(Layout::PD, i, S);
        std::vector<double> energy{s.c0};
        for (std::size_t k = 0; k < pc.size(); ++k)
            energy.push_back(energy.back() + To * (s.eta_c * pc[k] - pd[k] / s.eta_d));
        stores.push_back({{"bus", s.bus}, {"pc_mw", pc}, {"pd_mw", pd}, {"energy_mwh", energy}});
    }
    for (const auto& b : P.buses) {
        std::vector<double> lp(static_cast<std::size_t>(L.tau)), lq(lp.size());
        for (Eigen::Index k = 0; k < L.tau; ++k) {
            lp[static_cast<std::size_t>(k)] = y[b.index * L.tau + k];
            lq[static_cast<std::size_t>(k)] = y[L.nt() + b.index * L.tau + k];
        }
        buses.push_back({{"bus", b.id},
                         {"v_pu", series(Layout::V, b.index, 1.0)},
                         {"theta_rad", series(Layout::TH, b.index, 1.0)},
                         {"lambda_p", lp},
                         {"lambda_q", lq}});
    }
    return {{"tau", L.tau},
            {"slot_minutes", P.network.horizon.slot_minutes},
            {"generators", gens},
            {"storages", stores},
            {"buses", buses}};
}

/// Fields shared by every summary. The "timing" object holds the wall time
/// and timestamp and is the only part that differs between identical runs.
inline nlohmann::json summary_core(const MtsedProblem& P, const CompactProblem& cp,
                                   const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                                   const Eigen::Ref<const Eigen::VectorXd>& z, const KktReport& kkt)
{
    return {{"format", "mtsed-summary/1"},
            {"case", P.network.name},
            {"cost", cp.cost(x)},
            {"kkt", to_json(kkt)},
            {"feasibility", to_json(check_feasibility(P, x))},
            {"dispatch", dispatch_tables(P, x, y)},
            {"solution",
             {{"layout", "x=(p_g,q_g,p_c,p_d,v,theta) y=(lambda_p,lambda_q) z=(mu_M,mu_m,gamma_M,gamma_m); "
                         "bus-major, p.u."},
              {"x", to_std(x)},
              {"y", to_std(y)},
              {"z", to_std(z)}}}};
}

inline nlohmann::json timing_json(double wall_seconds)
{
    const auto now = std::chrono::system_clock::now();
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
    return {{"wall_seconds", wall_seconds}, {"unix_time", secs}};
}

inline nlohmann::json window_summary(const MtsedProblem& P, const CompactProblem& cp, const WindowResult& r,
                                     const IntegratorConfig& cfg)
{
    nlohmann::json j = summary_core(P, cp, r.xt, r.y, r.zplus, r.kkt);
    j["solver"] = "distributed";
    j["converged"] = r.converged;
    j["stop_reason"] = to_string(r.stop);
    j["iterations"] = r.steps;
    j["algorithm_time"] = r.t;
    j["residual"] = r.residual;
    j["lambda_p_norm"] = r.lambda_p_norm;
    j["lambda_q_norm"] = r.lambda_q_norm;
    j["integrator"] = {{"method", to_string(cfg.method)},
                       {"dt", cfg.dt},
                       {"tol", cfg.tol},
                       {"max_seconds", cfg.max_wall_seconds},
                       {"max_steps", cfg.max_steps}};
    j["timing"] = timing_json(r.wall_seconds);
    return j;
}

inline nlohmann::json oracle_summary(const MtsedProblem& P, const CompactProblem& cp, const OracleResult& o,
                                     double wall_seconds)
{
    nlohmann::json j;
    if (o.solved())
        j = summary_core(P, cp, o.x, o.y, o.z, o.kkt);
    else
        j = {{"format", "mtsed-summary/1"}, {"case", P.network.name}, {"infeasibility", o.infeasibility}};
    j["solver"] = "oracle";
    j["status"] = qp::to_string(o.status);
    j["converged"] = o.solved();
    j["iterations"] = o.iterations;
    j["timing"] = timing_json(wall_seconds);
    return j;
}

struct StoredSolution
{
    Eigen::VectorXd x, y, z;
};

/// The primal and dual vectors of a summary document.
inline StoredSolution read_solution(const std::string& text, const std::string& where = "solution")
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw CaseError(e.what(), where);
    }
    if (!j.contains("solution") || !j["solution"].is_object())
        throw CaseError("summary has no solution section", where);
    auto vec = [&](const char* key) {
        const auto& a = j["solution"][key];
        if (!a.is_array())
            throw CaseError(std::string("missing array solution.") + key, where);
        Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
        for (std::size_t k = 0; k < a.size(); ++k) {
            if (!a[k].is_number())
                throw CaseError(std::string("non-numeric entry in solution.") + key, where);
            v[static_cast<Eigen::Index>(k)] = a[k].get<double>();
        }
        return v;
    };
    return {vec("x"), vec("y"), vec("z")};
}

} // namespace mtsed

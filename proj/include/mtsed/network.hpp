#pragma once

// Case documents: parsing, validation, serialization, and the decoupled
// linearized power-flow (DLPF) matrices G, B and B' built from them.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "mtsed/error.hpp"

namespace mtsed {

struct BusData
{
    int id = 0;
    double gs = 0.0;    ///< shunt conductance, p.u.
    double bs = 0.0;    ///< shunt susceptance, p.u.
    double v_min = 0.9; ///< p.u.
    double v_max = 1.1; ///< p.u.

    bool operator==(const BusData&) const = default;
};

/// π-model branch. No taps or phase shifters.
struct BranchData
{
    int from = 0;
    int to = 0;
    double r = 0.0;   ///< p.u.
    double x = 0.0;   ///< p.u.
    double b_c = 0.0; ///< total line charging, p.u.

    bool operator==(const BranchData&) const = default;
};

/// Synchronous generator. Quadratic cost (a/2)p^2 + b p + c with p in MW.
/// `ramp_down` is a magnitude: the slot-to-slot decrease is bounded by
/// ramp_down * slot length.
struct GeneratorParams
{
    int bus = 0;
    double a = 0.0; ///< $/(MW^2 h)
    double b = 0.0; ///< $/MWh
    double c = 0.0; ///< $/h
    double p_min = 0.0, p_max = 0.0; ///< MW
    double q_min = 0.0, q_max = 0.0; ///< MVar
    double ramp_up = 0.0;   ///< MW/h
    double ramp_down = 0.0; ///< MW/h, magnitude
    double p0 = 0.0;        ///< MW, output right before the window

    bool operator==(const GeneratorParams&) const = default;
};

/// Energy storage device with linear cost a (pc + pd) + b.
struct StorageParams
{
    int bus = 0;
    double a = 0.0; ///< $/MWh
    double b = 0.0; ///< $/h
    double pc_max = 0.0, pd_max = 0.0; ///< MW
    double eta_c = 1.0, eta_d = 1.0;
    double c_min = 0.0, c_max = 0.0; ///< MWh
    double c0 = 0.0;                 ///< MWh, stored energy right before the window

    bool operator==(const StorageParams&) const = default;
};

struct DemandProfile
{
    int bus = 0;
    std::vector<double> p_mw;
    std::vector<double> q_mvar;

    bool operator==(const DemandProfile&) const = default;
};

struct HorizonSpec
{
    int tau = 1;
    double slot_minutes = 60.0;

    double slot_hours() const { return slot_minutes / 60.0; }
    bool operator==(const HorizonSpec&) const = default;
};

/// A parsed case document. Quantities stay in the document's units
/// (MW, MVar, MWh, $); conversion to per-unit happens at problem assembly.
struct NetworkCase
{
    std::string name;
    std::string notes;
    double base_mva = 100.0;
    double cost_base = 1000.0; ///< $/h per internal cost unit
    HorizonSpec horizon;
    std::vector<BusData> buses; ///< sorted by id; position is the bus index
    std::vector<BranchData> branches;
    std::vector<GeneratorParams> generators;
    std::vector<StorageParams> storages;
    std::vector<DemandProfile> demand;

    bool operator==(const NetworkCase&) const = default;

    std::size_t num_buses() const { return buses.size(); }

    std::optional<std::size_t> find_bus(int id) const
    {
        auto it = std::lower_bound(buses.begin(), buses.end(), id,
                                   [](const BusData& b, int v) { return b.id < v; });
        if (it == buses.end() || it->id != id)
            return std::nullopt;
        return static_cast<std::size_t>(it - buses.begin());
    }

    std::size_t index_of(int id) const
    {
        auto i = find_bus(id);
        if (!i)
            throw CaseError("unknown bus " + std::to_string(id));
        return *i;
    }

    const GeneratorParams* generator_at(int id) const
    {
        for (const auto& g : generators)
            if (g.bus == id)
                return &g;
        return nullptr;
    }

    const StorageParams* storage_at(int id) const
    {
        for (const auto& s : storages)
            if (s.bus == id)
                return &s;
        return nullptr;
    }

    const DemandProfile* demand_at(int id) const
    {
        for (const auto& d : demand)
            if (d.bus == id)
                return &d;
        return nullptr;
    }
};

struct DlpfMatrices
{
    Eigen::MatrixXd G;  ///< conductance
    Eigen::MatrixXd B;  ///< susceptance, with line charging and shunts
    Eigen::MatrixXd Bp; ///< susceptance of series elements only
};

namespace detail {

using nlohmann::json;

inline std::string line_col(const std::string& text, std::size_t byte)
{
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

class Reader
{
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object())
            throw CaseError("expected an object", path_);
    }

    void allow_only(std::initializer_list<const char*> keys) const
    {
        std::set<std::string> ok(keys.begin(), keys.end());
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!ok.count(it.key()))
                throw CaseError("unknown field", field(it.key()));
    }

    bool has(const char* key) const { return j_.contains(key); }

    double number(const char* key) const
    {
        const json& v = at(key);
        return to_number(v, field(key));
    }

    double number_or(const char* key, double dflt) const { return has(key) ? number(key) : dflt; }

    int integer(const char* key) const
    {
        const json& v = at(key);
        if (!v.is_number_integer())
            throw CaseError("expected an integer", field(key));
        return v.get<int>();
    }

    std::string string_or(const char* key, std::string dflt) const
    {
        if (!has(key))
            return dflt;
        const json& v = at(key);
        if (!v.is_string())
            throw CaseError("expected a string", field(key));
        return v.get<std::string>();
    }

    std::vector<double> numbers(const char* key) const
    {
        const json& v = at(key);
        if (!v.is_array())
            throw CaseError("expected an array of numbers", field(key));
        std::vector<double> out;
        out.reserve(v.size());
        for (std::size_t k = 0; k < v.size(); ++k)
            out.push_back(to_number(v[k], field(key) + "[" + std::to_string(k) + "]"));
        return out;
    }

    const json& at(const char* key) const
    {
        if (!j_.contains(key))
            throw CaseError("missing field", field(key));
        return j_.at(key);
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    static double to_number(const json& v, const std::string& where)
    {
        if (!v.is_number())
            throw CaseError("expected a number", where);
        double d = v.get<double>();
        if (!std::isfinite(d))
            throw CaseError("non-finite number", where);
        return d;
    }

    const json& j_;
    std::string path_;
};

template <typename F>
void for_each_item(const json& root, const char* key, F&& f)
{
    if (!root.contains(key))
        return;
    const json& arr = root.at(key);
    if (!arr.is_array())
        throw CaseError("expected an array", key);
    for (std::size_t k = 0; k < arr.size(); ++k)
        f(Reader(arr[k], std::string(key) + "[" + std::to_string(k) + "]"));
}

} // namespace detail

/// Checks every structural invariant of a case. Throws CaseError naming the
/// offending entity.
inline void validate_case(const NetworkCase& c)
{
    if (!(c.base_mva > 0))
        throw CaseError("base_mva must be positive", "base_mva");
    if (!(c.cost_base > 0))
        throw CaseError("cost_base must be positive", "cost_base");
    if (c.horizon.tau < 1)
        throw CaseError("tau must be at least 1", "horizon.tau");
    if (!(c.horizon.slot_minutes > 0))
        throw CaseError("slot_minutes must be positive", "horizon.slot_minutes");
    if (c.buses.empty())
        throw CaseError("case has no buses", "buses");

    for (std::size_t k = 0; k < c.buses.size(); ++k) {
        const auto& b = c.buses[k];
        if (k > 0 && c.buses[k - 1].id > b.id)
            throw CaseError("buses must be listed in increasing id order", "buses");
        if (k > 0 && c.buses[k - 1].id == b.id)
            throw CaseError("duplicate bus id " + std::to_string(b.id), "buses");
        if (!(b.v_min < b.v_max))
            throw CaseError("bus " + std::to_string(b.id) + ": v_min must be below v_max", "buses");
    }

    const std::size_t n = c.buses.size();
    std::vector<std::vector<std::size_t>> adj(n);
    for (std::size_t k = 0; k < c.branches.size(); ++k) {
        const auto& br = c.branches[k];
        const std::string where = "branches[" + std::to_string(k) + "]";
        for (int end : {br.from, br.to})
            if (!c.find_bus(end))
                throw CaseError("branch refers to unknown bus " + std::to_string(end), where);
        if (br.from == br.to)
            throw CaseError("branch connects bus " + std::to_string(br.from) + " to itself", where);
        if (!(br.r >= 0))
            throw CaseError("resistance must be non-negative", where);
        if (!(br.x > 0))
            throw CaseError("reactance must be positive", where);
        auto i = c.index_of(br.from), j = c.index_of(br.to);
        adj[i].push_back(j);
        adj[j].push_back(i);
    }

    std::vector<bool> seen(n, false);
    std::queue<std::size_t> q;
    q.push(0);
    seen[0] = true;
    while (!q.empty()) {
        auto i = q.front();
        q.pop();
        for (auto j : adj[i])
            if (!seen[j]) {
                seen[j] = true;
                q.push(j);
            }
    }
    for (std::size_t i = 0; i < n; ++i)
        if (!seen[i])
            throw CaseError("network is disconnected: bus " + std::to_string(c.buses[i].id) +
                                " is unreachable from bus " + std::to_string(c.buses[0].id),
                            "branches");

    std::set<int> gen_buses, sto_buses, dem_buses;
    for (std::size_t k = 0; k < c.generators.size(); ++k) {
        const auto& g = c.generators[k];
        const std::string where = "generators[" + std::to_string(k) + "]";
        if (!c.find_bus(g.bus))
            throw CaseError("generator attached to unknown bus " + std::to_string(g.bus), where);
        if (!gen_buses.insert(g.bus).second)
            throw CaseError("second generator at bus " + std::to_string(g.bus), where);
        if (g.a < 0)
            throw CaseError("quadratic cost coefficient must be non-negative", where);
        if (g.p_min > g.p_max)
            throw CaseError("p_min exceeds p_max", where);
        if (g.q_min > g.q_max)
            throw CaseError("q_min exceeds q_max", where);
    }
    for (std::size_t k = 0; k < c.storages.size(); ++k) {
        const auto& s = c.storages[k];
        const std::string where = "storages[" + std::to_string(k) + "]";
        if (!c.find_bus(s.bus))
            throw CaseError("storage attached to unknown bus " + std::to_string(s.bus), where);
        if (!sto_buses.insert(s.bus).second)
            throw CaseError("second storage at bus " + std::to_string(s.bus), where);
        if (s.a < 0)
            throw CaseError("linear cost coefficient must be non-negative", where);
        if (s.pc_max < 0 || s.pd_max < 0)
            throw CaseError("power limits must be non-negative", where);
        if (!(s.eta_c > 0 && s.eta_c <= 1 && s.eta_d > 0 && s.eta_d <= 1))
            throw CaseError("efficiencies must lie in (0, 1]", where);
        if (!(0 <= s.c_min && s.c_min <= s.c0 && s.c0 <= s.c_max))
            throw CaseError("energy levels must satisfy 0 <= c_min <= c0 <= c_max", where);
    }
    for (std::size_t k = 0; k < c.demand.size(); ++k) {
        const auto& d = c.demand[k];
        const std::string where = "demand[" + std::to_string(k) + "]";
        if (!c.find_bus(d.bus))
            throw CaseError("demand at unknown bus " + std::to_string(d.bus), where);
        if (!dem_buses.insert(d.bus).second)
            throw CaseError("second demand entry for bus " + std::to_string(d.bus), where);
        const auto tau = static_cast<std::size_t>(c.horizon.tau);
        if (d.p_mw.size() != tau || d.q_mvar.size() != tau)
            throw CaseError("bus " + std::to_string(d.bus) + ": demand arrays must have exactly tau=" +
                                std::to_string(tau) + " entries",
                            where);
    }
}

/// Parses a JSON case document. Sections: name, notes, base_mva, cost_base,
/// horizon {tau, slot_minutes}, buses[], branches[], generators[], storages[],
/// demand[].
inline NetworkCase parse_case(const std::string& text)
{
    using detail::json;
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw CaseError(e.what(), detail::line_col(text, e.byte));
    }

    detail::Reader top(root, "");
    top.allow_only({"name", "notes", "base_mva", "cost_base", "horizon", "buses", "branches",
                    "generators", "storages", "demand"});

    NetworkCase c;
    c.name = top.string_or("name", "");
    c.notes = top.string_or("notes", "");
    c.base_mva = top.number_or("base_mva", 100.0);
    c.cost_base = top.number_or("cost_base", 1000.0);

    detail::Reader hz(top.at("horizon"), "horizon");
    hz.allow_only({"tau", "slot_minutes"});
    c.horizon.tau = hz.integer("tau");
    c.horizon.slot_minutes = hz.number("slot_minutes");

    if (!root.contains("buses"))
        throw CaseError("missing field", "buses");
    detail::for_each_item(root, "buses", [&](const detail::Reader& r) {
        r.allow_only({"id", "gs", "bs", "v_min", "v_max"});
        BusData b;
        b.id = r.integer("id");
        b.gs = r.number_or("gs", 0.0);
        b.bs = r.number_or("bs", 0.0);
        b.v_min = r.number("v_min");
        b.v_max = r.number("v_max");
        c.buses.push_back(b);
    });
    std::stable_sort(c.buses.begin(), c.buses.end(),
                     [](const BusData& a, const BusData& b) { return a.id < b.id; });

    detail::for_each_item(root, "branches", [&](const detail::Reader& r) {
        r.allow_only({"from", "to", "r", "x", "b"});
        BranchData br;
        br.from = r.integer("from");
        br.to = r.integer("to");
        br.r = r.number("r");
        br.x = r.number("x");
        br.b_c = r.number_or("b", 0.0);
        c.branches.push_back(br);
    });

    detail::for_each_item(root, "generators", [&](const detail::Reader& r) {
        r.allow_only({"bus", "a", "b", "c", "p_min", "p_max", "q_min", "q_max", "ramp_up",
                      "ramp_down", "p0"});
        GeneratorParams g;
        g.bus = r.integer("bus");
        g.a = r.number("a");
        g.b = r.number("b");
        g.c = r.number("c");
        g.p_min = r.number("p_min");
        g.p_max = r.number("p_max");
        g.q_min = r.number("q_min");
        g.q_max = r.number("q_max");
        g.ramp_up = r.number("ramp_up");
        g.ramp_down = r.number("ramp_down");
        g.p0 = r.number("p0");
        c.generators.push_back(g);
    });

    detail::for_each_item(root, "storages", [&](const detail::Reader& r) {
        r.allow_only({"bus", "a", "b", "pc_max", "pd_max", "eta_c", "eta_d", "c_min", "c_max", "c0"});
        StorageParams s;
        s.bus = r.integer("bus");
        s.a = r.number("a");
        s.b = r.number("b");
        s.pc_max = r.number("pc_max");
        s.pd_max = r.number("pd_max");
        s.eta_c = r.number("eta_c");
        s.eta_d = r.number("eta_d");
        s.c_min = r.number("c_min");
        s.c_max = r.number("c_max");
        s.c0 = r.number("c0");
        c.storages.push_back(s);
    });

    detail::for_each_item(root, "demand", [&](const detail::Reader& r) {
        r.allow_only({"bus", "p_mw", "q_mvar"});
        DemandProfile d;
        d.bus = r.integer("bus");
        d.p_mw = r.numbers("p_mw");
        d.q_mvar = r.numbers("q_mvar");
        c.demand.push_back(d);
    });

    validate_case(c);
    return c;
}

inline std::string serialize_case(const NetworkCase& c)
{
    using detail::json;
    json root = json::object();
    if (!c.name.empty())
        root["name"] = c.name;
    if (!c.notes.empty())
        root["notes"] = c.notes;
    root["base_mva"] = c.base_mva;
    root["cost_base"] = c.cost_base;
    root["horizon"] = {{"tau", c.horizon.tau}, {"slot_minutes", c.horizon.slot_minutes}};
    json buses = json::array();
    for (const auto& b : c.buses)
        buses.push_back({{"id", b.id}, {"gs", b.gs}, {"bs", b.bs}, {"v_min", b.v_min}, {"v_max", b.v_max}});
    root["buses"] = buses;
    json branches = json::array();
    for (const auto& br : c.branches)
        branches.push_back({{"from", br.from}, {"to", br.to}, {"r", br.r}, {"x", br.x}, {"b", br.b_c}});
    root["branches"] = branches;
    json gens = json::array();
    for (const auto& g : c.generators)
        gens.push_back({{"bus", g.bus},         {"a", g.a},
                        {"b", g.b},             {"c", g.c},
                        {"p_min", g.p_min},     {"p_max", g.p_max},
                        {"q_min", g.q_min},     {"q_max", g.q_max},
                        {"ramp_up", g.ramp_up}, {"ramp_down", g.ramp_down},
                        {"p0", g.p0}});
    root["generators"] = gens;
    json stos = json::array();
    for (const auto& s : c.storages)
        stos.push_back({{"bus", s.bus},     {"a", s.a},         {"b", s.b},
                        {"pc_max", s.pc_max}, {"pd_max", s.pd_max}, {"eta_c", s.eta_c},
                        {"eta_d", s.eta_d}, {"c_min", s.c_min}, {"c_max", s.c_max},
                        {"c0", s.c0}});
    root["storages"] = stos;
    json dem = json::array();
    for (const auto& d : c.demand)
        dem.push_back({{"bus", d.bus}, {"p_mw", d.p_mw}, {"q_mvar", d.q_mvar}});
    root["demand"] = dem;
    return root.dump(2);
}

/// Bus admittance matrix split into G, B (π-model with half line charging at
/// each end plus bus shunts) and B' (series elements only).
inline DlpfMatrices build_dlpf(const NetworkCase& c)
{
    const auto n = static_cast<Eigen::Index>(c.num_buses());
    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(n, n);
    Eigen::MatrixXcd Ys = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& br : c.branches) {
        const auto i = static_cast<Eigen::Index>(c.index_of(br.from));
        const auto j = static_cast<Eigen::Index>(c.index_of(br.to));
        const std::complex<double> y = 1.0 / std::complex<double>(br.r, br.x);
        const std::complex<double> half_charging(0.0, br.b_c / 2.0);
        Y(i, i) += y + half_charging;
        Y(j, j) += y + half_charging;
        Y(i, j) -= y;
        Y(j, i) -= y;
        Ys(i, i) += y;
        Ys(j, j) += y;
        Ys(i, j) -= y;
        Ys(j, i) -= y;
    }
    for (Eigen::Index i = 0; i < n; ++i)
        Y(i, i) += std::complex<double>(c.buses[static_cast<std::size_t>(i)].gs,
                                        c.buses[static_cast<std::size_t>(i)].bs);
    return DlpfMatrices{Y.real(), Y.imag(), Ys.imag()};
}

/// Bus ids sharing at least one branch with bus `id`.
inline std::set<int> neighbors(const NetworkCase& c, int id)
{
    (void)c.index_of(id);
    std::set<int> out;
    for (const auto& br : c.branches) {
        if (br.from == id)
            out.insert(br.to);
        else if (br.to == id)
            out.insert(br.from);
    }
    return out;
}

} // namespace mtsed

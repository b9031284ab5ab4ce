#include "hf/core.hpp"

#include <cmath>
#include <set>
#include <sstream>

namespace hf {

bool all_finite(const State& x) {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i])) return false;
    }
    return true;
}

void DomainDef::apply_wrap(State& x) const {
    for (const Wrap& w : wrap) {
        double v = std::fmod(x[w.index], w.period);
        if (v < 0.0) v += w.period;
        // fmod of a value just below a negative multiple can round up to the period
        if (v >= w.period) v = 0.0;
        x[w.index] = v;
    }
}

const DomainDef* HybridSystem::find_domain(const std::string& id) const {
    for (const auto& d : domains_) {
        if (d.id == id) return &d;
    }
    return nullptr;
}

const GuardDef* HybridSystem::find_guard(const std::string& id) const {
    for (const auto& g : guards_) {
        if (g.id == id) return &g;
    }
    return nullptr;
}

const DomainDef& HybridSystem::domain(const std::string& id) const {
    const DomainDef* d = find_domain(id);
    if (d == nullptr) throw Error("unknown domain '" + id + "'");
    return *d;
}

std::vector<const GuardDef*> HybridSystem::guards_from(const std::string& domain) const {
    std::vector<const GuardDef*> out;
    for (const auto& g : guards_) {
        if (g.src == domain) out.push_back(&g);
    }
    return out;
}

std::vector<std::string> HybridSystem::coordinate_union() const {
    std::vector<std::string> names;
    std::set<std::string> seen;
    for (const auto& d : domains_) {
        for (const auto& n : d.coord_names) {
            if (seen.insert(n).second) names.push_back(n);
        }
    }
    return names;
}

const char* to_string(DiagnosticKind kind) {
    switch (kind) {
        case DiagnosticKind::DuplicateDomain: return "duplicate-domain";
        case DiagnosticKind::DuplicateGuard: return "duplicate-guard";
        case DiagnosticKind::InvalidDimension: return "invalid-dimension";
        case DiagnosticKind::CoordNameMismatch: return "coord-name-mismatch";
        case DiagnosticKind::InvalidWrap: return "invalid-wrap";
        case DiagnosticKind::UnresolvedDomain: return "unresolved-id";
        case DiagnosticKind::DimensionMismatch: return "dimension-mismatch";
        case DiagnosticKind::MissingCallable: return "missing-callable";
        case DiagnosticKind::ProbeFailure: return "probe-failure";
    }
    return "unknown";
}

namespace {

std::string size_message(const std::string& what, Eigen::Index got, int want) {
    std::ostringstream os;
    os << what << " returned " << got << " entries, expected " << want;
    return os.str();
}

}  // namespace

std::vector<Diagnostic> validate(const HybridSystem& system) {
    std::vector<Diagnostic> out;
    auto report = [&](DiagnosticKind k, const std::string& subject, std::string msg) {
        out.push_back({k, subject, std::move(msg)});
    };

    std::set<std::string> domain_ids;
    for (const auto& d : system.domains()) {
        if (!domain_ids.insert(d.id).second) {
            report(DiagnosticKind::DuplicateDomain, d.id, "domain id declared twice");
        }
        if (d.dim <= 0) {
            report(DiagnosticKind::InvalidDimension, d.id, "dimension must be positive");
            continue;
        }
        if (!d.coord_names.empty() && static_cast<int>(d.coord_names.size()) != d.dim) {
            report(DiagnosticKind::CoordNameMismatch, d.id, "coord_names length differs from dim");
        }
        for (const Wrap& w : d.wrap) {
            if (w.index < 0 || w.index >= d.dim || !(w.period > 0.0) || !std::isfinite(w.period)) {
                report(DiagnosticKind::InvalidWrap, d.id, "wrap needs a valid index and a positive period");
            }
        }
        if (!d.field) {
            report(DiagnosticKind::MissingCallable, d.id, "vector field not set");
            continue;
        }
        try {
            State y = d.field(State::Zero(d.dim));
            if (y.size() != d.dim) {
                report(DiagnosticKind::DimensionMismatch, d.id, size_message("field", y.size(), d.dim));
            }
        } catch (const std::exception& e) {
            report(DiagnosticKind::ProbeFailure, d.id, std::string("field probe threw: ") + e.what());
        }
    }

    std::set<std::string> guard_ids;
    for (const auto& g : system.guards()) {
        if (!guard_ids.insert(g.id).second) {
            report(DiagnosticKind::DuplicateGuard, g.id, "guard id declared twice");
        }
        const DomainDef* src = system.find_domain(g.src);
        const DomainDef* dst = system.find_domain(g.dst);
        if (src == nullptr) {
            report(DiagnosticKind::UnresolvedDomain, g.id, "source domain '" + g.src + "' is not declared");
        }
        if (dst == nullptr) {
            report(DiagnosticKind::UnresolvedDomain, g.id, "target domain '" + g.dst + "' is not declared");
        }
        if (!g.event || !g.reset) {
            report(DiagnosticKind::MissingCallable, g.id, "event or reset not set");
            continue;
        }
        if (src == nullptr || src->dim <= 0) continue;
        try {
            (void)g.event(State::Zero(src->dim));
            State r = g.reset(State::Zero(src->dim));
            if (dst != nullptr && r.size() != dst->dim) {
                report(DiagnosticKind::DimensionMismatch, g.id, size_message("reset", r.size(), dst->dim));
            }
        } catch (const std::exception& e) {
            report(DiagnosticKind::ProbeFailure, g.id, std::string("guard probe threw: ") + e.what());
        }
    }
    return out;
}

}  // namespace hf

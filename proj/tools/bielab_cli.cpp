// Command-line driver for the estimate laboratory. Every subcommand writes a
// JSON report (machine-readable pass/fail + metrics) and CSV data files to
// --out; the exit code is nonzero iff a gating assertion fails.

#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "bielab/bielab.hpp"

using namespace bielab;

namespace {

struct CommonFlags {
  int dim = 3;
  std::string domain = "flat";
  double amplitude = 0.4;
  double h = 0;
  double rtrunc = 0;
  std::string out = "out";
  unsigned seed = 1;
  std::string profile = "smoke";
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->set_help_flag("--help", "print help");  // frees -h for the spacing flag
  cmd->add_option("--dim", f.dim, "ambient dimension n");
  cmd->add_option("--domain", f.domain, "flat | bump | tent");
  cmd->add_option("--amplitude", f.amplitude, "profile amplitude c");
  cmd->add_option("--h", f.h, "boundary grid spacing");
  cmd->add_option("--rtrunc", f.rtrunc, "truncation radius");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--seed", f.seed, "RNG seed recorded in the report");
  cmd->add_option("--tolerance-profile", f.profile, "strict | smoke");
}

MeshParams mesh_params(const CommonFlags& f, double h_default, double R_default) {
  MeshParams m;
  m.dim = f.dim;
  m.profile = profile_from_string(f.domain);
  m.amplitude = (m.profile == Profile::flat) ? 0.0 : f.amplitude;
  m.h = (f.h > 0) ? f.h : h_default;
  m.R = (f.rtrunc > 0) ? f.rtrunc : R_default;
  return m;
}

int finish(ExperimentResult res, const CommonFlags& f) {
  res.save(f.out);
  std::cout << res.report["experiment"].get<std::string>()
            << (res.pass ? ": PASS" : ": FAIL") << "\n";
  for (const auto& g : res.report["gates"])
    std::cout << "  [" << (g["pass"].get<bool>() ? "ok" : "FAIL") << "] "
              << g["name"].get<std::string>() << " = " << g["value"].dump() << "\n";
  return res.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"boundary-integral estimate laboratory"};
  app.set_help_flag("--help", "print help");
  app.require_subcommand(1);

  CommonFlags f;
  int rc = 0;

  auto* exponents = app.add_subcommand("exponents", "critical exponent tables (exact rationals)");
  add_common(exponents, f);
  exponents->callback([&] { rc = finish(run_exponents(), f); });

  auto* jump = app.add_subcommand("jump-relations", "extrapolated jump-relation verification");
  add_common(jump, f);
  jump->callback([&] {
    JumpParams p = JumpParams::defaults(f.dim, profile_from_string(f.domain), f.amplitude);
    if (f.h > 0) p.mesh.h = f.h;
    if (f.rtrunc > 0) p.mesh.R = f.rtrunc;
    p.seed = f.seed;
    if (f.profile == "smoke") {
      p.densities = 8;
      p.subsample = 250;
    }
    rc = finish(run_jump_relations(p), f);
  });

  auto* hmms = app.add_subcommand("harmonic-mms", "harmonic manufactured-solution study");
  add_common(hmms, f);
  hmms->callback([&] {
    HarmonicMmsParams p;
    p.mesh = mesh_params(f, f.dim >= 4 ? 0.45 : 0.125, 4.0);
    p.seed = f.seed;
    rc = finish(run_harmonic_mms(p), f);
  });

  auto* bmms = app.add_subcommand("biharmonic-mms", "biharmonic manufactured-solution study");
  add_common(bmms, f);
  bmms->callback([&] {
    BiharmonicMmsParams p;
    p.mesh = mesh_params(f, 0.5, 4.0);
    p.mesh.dim = 4;
    p.seed = f.seed;
    p.run_refinement = (f.profile != "smoke");
    rc = finish(run_biharmonic_mms(p), f);
  });

  auto* decay = app.add_subcommand("decay", "dyadic decay of the reduced solution");
  add_common(decay, f);
  decay->callback([&] {
    if (f.dim == 5 || (f.dim == 4 && f.profile == "surrogate")) {
      TildeDecayParams p;
      p.dim = f.dim;
      rc = finish(run_tilde_decay(p), f);
      return;
    }
    DecayParams p;
    p.mesh = mesh_params(f, 1.0, 8.0);
    p.mesh.dim = 4;
    p.seed = f.seed;
    rc = finish(run_decay(p), f);
  });

  auto* boot = app.add_subcommand("bootstrap4d", "two-stage four-dimensional bootstrap");
  add_common(boot, f);
  boot->callback([&] {
    Bootstrap4dParams p;
    p.decay.mesh = mesh_params(f, 1.0, 8.0);
    p.decay.mesh.dim = 4;
    p.decay.seed = f.seed;
    rc = finish(run_bootstrap4d(p), f);
  });

  auto* hiding = app.add_subcommand("hiding", "hiding-lemma certificates on random sequences");
  add_common(hiding, f);
  hiding->callback([&] {
    HidingParams p;
    p.seed = f.seed;
    rc = finish(run_hiding(p), f);
  });

  auto* axn = app.add_subcommand("atomic-xnorm", "atom-family X-norm uniformity");
  add_common(axn, f);
  axn->callback([&] {
    AtomicXnormParams p;
    p.mesh = mesh_params(f, 1.0, 8.0);
    p.mesh.dim = 4;
    p.seed = f.seed;
    rc = finish(run_atomic_xnorm(p), f);
  });

  auto* norms = app.add_subcommand("norms-selftest", "function-space self tests");
  add_common(norms, f);
  norms->callback([&] {
    NormsSelftestParams p;
    p.seed = f.seed;
    rc = finish(run_norms_selftest(p), f);
  });

  CLI11_PARSE(app, argc, argv);
  return rc;
}

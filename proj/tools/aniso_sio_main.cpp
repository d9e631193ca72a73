#include <cstdio>
#include <exception>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "aniso/errors.hpp"
#include "aniso/kernel.hpp"
#include "aniso/verify.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::string& json_out,
            const std::string& csv_out) {
  auto cfg = aniso::verify::config_from_json_file(config_path);
  if (!json_out.empty()) cfg.output_json = json_out;
  if (!csv_out.empty()) cfg.output_csv = csv_out;
  const auto report = aniso::verify::run(cfg);
  for (const auto& c : report.checks) {
    std::printf("%-4s %-32s %6.2fs", c.pass ? "PASS" : "FAIL", c.id.c_str(),
                c.runtime_seconds);
    if (!c.pass && !c.detail.empty()) std::printf("  %s", c.detail.c_str());
    std::printf("\n");
  }
  std::size_t passed = 0;
  for (const auto& c : report.checks) passed += c.pass;
  std::printf("%zu/%zu checks passed (experiment %s, seed %llu)\n", passed,
              report.checks.size(), report.experiment.c_str(),
              static_cast<unsigned long long>(report.seed));
  return report.all_pass() ? 0 : 1;
}

int cmd_list() {
  for (const auto& name : aniso::verify::experiment_names()) std::printf("%s\n", name.c_str());
  std::printf("all\n");
  return 0;
}

int cmd_validate_kernel(const std::string& name) {
  aniso::kernel::VariableKernel k = [&] {
    try {
      return aniso::kernel::builtin(name);
    } catch (const aniso::UnknownKernel&) {
      return aniso::kernel::control(name);
    }
  }();
  const auto report = aniso::kernel::validate(k);
  std::printf("kernel %s (n=%d)\n", k.name.c_str(), k.dim());
  std::printf("  homogeneity residual    %.3e\n", report.homogeneity_max_residual);
  std::printf("  cancellation residual   %.3e\n", report.cancellation_residual);
  std::printf("  mean absolute integral  %.6f\n", report.mean_absolute_integral);
  std::map<int, double> by_order;
  for (const auto& [beta, sup] : report.derivative_sup_estimates) {
    int order = 0;
    for (int b : beta) order += b;
    by_order[order] = std::max(by_order[order], sup);
  }
  for (const auto& [order, sup] : by_order)
    std::printf("  derivative sup order %d  %.3e\n", order, sup);
  std::printf("%s\n", report.pass ? "PASS" : "FAIL");
  return report.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"verification harness for anisotropic singular integral operators"};
  app.require_subcommand(1);

  std::string config_path, json_out, csv_out, kernel_name;

  auto* run = app.add_subcommand("run", "run experiments from a JSON config");
  run->add_option("--config", config_path, "ExperimentConfig JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("--json", json_out, "write the report as JSON to this path");
  run->add_option("--csv", csv_out, "write the report as CSV to this path");

  auto* list = app.add_subcommand("list-experiments", "print experiment names");

  auto* vk = app.add_subcommand("validate-kernel", "check one kernel against the axioms");
  vk->add_option("--name", kernel_name, "builtin or control kernel name")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, json_out, csv_out);
    if (list->parsed()) return cmd_list();
    if (vk->parsed()) return cmd_validate_kernel(kernel_name);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}

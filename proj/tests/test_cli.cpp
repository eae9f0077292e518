// End-to-end exercise of the command-line interface: exit codes, artifact
// files, and a miniature synth -> train -> evaluate -> map pipeline.
// argv[1] is the path to the latentpath binary.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int failures = 0;
std::string cli;
fs::path work;

int run(const std::string& args, const std::string& log_name) {
  const std::string cmd =
      cli + " " + args + " > " + (work / (log_name + ".log")).string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string log_contents(const std::string& log_name) {
  std::ifstream in(work / (log_name + ".log"));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void expect(bool ok, const std::string& what) {
  if (!ok) {
    std::fprintf(stderr, "FAIL: %s\n", what.c_str());
    ++failures;
  } else {
    std::printf("ok: %s\n", what.c_str());
  }
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool dirs_identical(const fs::path& a, const fs::path& b) {
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a);
    if (!fs::exists(b / rel) || slurp(entry.path()) != slurp(b / rel)) return false;
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: cli_smoke <latentpath-binary>\n");
    return 64;
  }
  cli = argv[1];
  work = fs::temp_directory_path() / "lp_cli_smoke";
  fs::remove_all(work);
  fs::create_directories(work);

  expect(run("--help", "help") == 0, "--help exits 0");
  expect(run("synth --help", "synth_help") == 0, "subcommand --help exits 0");
  expect(run("frobnicate", "unknown") == 2, "unknown subcommand exits 2");
  expect(run("synth --bogus-flag x --out d", "badflag") == 2, "unknown flag exits 2");
  expect(run("synth --out " + (work / "bad").string() + " --size 63", "badsize") == 2,
         "non-power-of-two size exits 2");
  expect(log_contents("badsize").find("power of two") != std::string::npos,
         "size error names the constraint");
  expect(run("evaluate --data nowhere", "noargs") == 2,
         "evaluate without a model exits 2");

  // deterministic synth
  const std::string synth_args = " --size 16 --count 60 --seed 7";
  expect(run("synth --out " + (work / "data_a").string() + synth_args, "synth_a") == 0,
         "synth succeeds");
  expect(run("synth --out " + (work / "data_b").string() + synth_args, "synth_b") == 0,
         "synth twice");
  expect(dirs_identical(work / "data_a", work / "data_b"),
         "same seed gives byte-identical dataset directories");

  // mini pipeline on the tiny dataset
  const std::string data = (work / "data_a").string();
  const std::string config = (work / "cfg.txt").string();
  {
    std::ofstream cfg(config);
    cfg << "patch_size = 16\nlatent_dim = 8\nchannel_cap = 16\n"
        << "ae_epochs = 3\nsupervised_epochs = 6\nhead_epochs = 30\n";
  }
  const std::string ae = (work / "ae.lpth").string();
  expect(run("train-ae --data " + data + " --config " + config + " --out " + ae +
                 " --seed 3",
             "train_ae") == 0,
         "train-ae succeeds");
  expect(fs::exists(ae) && fs::exists(ae + ".loss.csv") && fs::exists(ae + ".manifest.json"),
         "train-ae writes checkpoint, loss csv and manifest");
  {
    std::ifstream loss(ae + ".loss.csv");
    std::string header;
    std::getline(loss, header);
    int rows = 0;
    for (std::string line; std::getline(loss, line);) rows += !line.empty();
    expect(header == "epoch,mean_loss" && rows == 3, "loss csv has one row per epoch");
  }

  const std::string km = (work / "km.lpkm").string();
  expect(run("cluster --encoder " + ae + " --data " + data + " --labels-n 30 --k 6 --seed 4" +
                 " --out " + km,
             "cluster") == 0,
         "cluster succeeds");
  expect(run("cluster --encoder " + ae + " --data " + data + " --labels-n 0 --k 6 --seed 4" +
                 " --out " + (work / "km0.lpkm").string(),
             "cluster0") == 0,
         "cluster with zero labels succeeds");
  expect(log_contents("cluster0").find("warning") != std::string::npos,
         "zero-label clustering warns about the all-stroma map");

  const std::string head = (work / "head.lpth").string();
  expect(run("train-head --encoder " + ae + " --data " + data + " --labels-n 30 --seed 5" +
                 " --epochs 30 --out " + head,
             "train_head") == 0,
         "train-head succeeds");

  const std::string sup = (work / "sup.lpth").string();
  expect(run("train-supervised --data " + data + " --labels-n 30 --config " + config +
                 " --seed 6 --out " + sup,
             "train_sup") == 0,
         "train-supervised succeeds");

  for (const std::string model : {" --supervised " + sup,
                                  " --encoder " + ae + " --head " + head,
                                  " --encoder " + ae + " --clusters " + km}) {
    expect(run("evaluate --data " + data + model, "eval") == 0, "evaluate succeeds");
    expect(log_contents("eval").find("F1 ") != std::string::npos, "evaluate prints F1");
  }

  // map on one of the synthetic patches scaled up? use a dedicated region:
  // synth a 16px dataset gives 16px patches; render a map over one image.
  const std::string region = (work / "data_a/images/he_00000.ppm").string();
  expect(run("map --region " + region + " --supervised " + sup + " --stride 8 --out " +
                 (work / "map.pam").string() + " --overlay " + (work / "overlay.ppm").string(),
             "map") == 0,
         "map succeeds");
  expect(fs::exists(work / "map.pam") && fs::exists(work / "overlay.ppm"),
         "map writes PAM and overlay");
  {
    std::ifstream pam(work / "map.pam", std::ios::binary);
    std::string first;
    std::getline(pam, first);
    expect(first == "P7", "map output is a P7 PAM file");
  }

  if (failures == 0) fs::remove_all(work);
  std::printf("%s (%d failures)\n", failures ? "CLI SMOKE FAILED" : "CLI smoke passed",
              failures);
  return failures == 0 ? 0 : 1;
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "tbnet/data.hpp"
#include "tbnet/image.hpp"
#include "tbnet/model_io.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

fs::path work_dir() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() /
                 ("tbnet_cli_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

RunResult run(const std::string& args) {
  const fs::path out = work_dir() / "stdout.txt";
  const fs::path err = work_dir() / "stderr.txt";
  const std::string cmd = std::string(TBCLI_PATH) + " " + args + " > " +
                          out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) {
    if (c == '\n') ++n;
  }
  return n;
}

/// Small on-disk corpus; positives carry a bright square.
fs::path make_corpus(const std::string& tag, int n_per_class) {
  const fs::path root = work_dir() / tag;
  for (const char* cls : {"Normal", "Tuberculosis"}) {
    fs::create_directories(root / cls);
    for (int i = 0; i < n_per_class; ++i) {
      tbnet::ImageF img(32, 32);
      for (int r = 0; r < 32; ++r) {
        for (int c = 0; c < 32; ++c) {
          img(r, c) = 0.2f + 0.01f * static_cast<float>((r + c + i) % 16);
        }
      }
      if (std::string(cls) == "Tuberculosis") {
        img.block(8, 8, 12, 12).setConstant(0.95f);
      }
      tbnet::write_pgm((root / cls / ("s" + std::to_string(i) + ".pgm")).string(),
                       img);
    }
  }
  return root;
}

const std::string model_path = (work_dir() / "model.tbw").string();

}  // namespace

TEST_CASE("train smoke run emits one json line per epoch") {
  auto r = run("train --synth 4 --epochs 2 --batch 4 --seed 1 --out " +
               model_path);
  REQUIRE(r.exit_code == 0);
  CHECK(count_lines(r.out) == 2);
  CHECK(r.out.find("\"epoch\":0") != std::string::npos);
  CHECK(r.out.find("\"epoch\":1") != std::string::npos);
  CHECK(r.out.find("\"loss\"") != std::string::npos);
  CHECK(r.out.find("\"accuracy\"") != std::string::npos);
  CHECK(r.out.find("\"lr\":0.001") != std::string::npos);  // default schedule
  CHECK(r.err.find("saved model") != std::string::npos);

  auto loaded = tbnet::load_model(model_path);
  CHECK(loaded.model.spec.preset == "tiny");
}

TEST_CASE("zero epochs still writes an untrained model") {
  const std::string out = (work_dir() / "zero.tbw").string();
  auto r = run("train --synth 4 --epochs 0 --seed 1 --out " + out);
  REQUIRE(r.exit_code == 0);
  CHECK(count_lines(r.out) == 0);
  CHECK(fs::exists(out));
}

TEST_CASE("usage errors exit with code 1") {
  CHECK(run("train --out x.tbw").exit_code == 1);  // neither source
  CHECK(run("train --synth 4 --data somewhere --out x.tbw").exit_code ==
        1);  // both sources
  CHECK(run("train --synth 4").exit_code == 1);  // missing required --out
  CHECK(run("nonsense").exit_code == 1);
  CHECK(run("train --synth 4 --preset giant --out x.tbw").exit_code == 1);
}

TEST_CASE("missing corpus exits with code 2") {
  auto r = run("train --data " + (work_dir() / "nope").string() + " --out " +
               (work_dir() / "x.tbw").string());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("data error") != std::string::npos);
}

TEST_CASE("broken model container exits with code 3") {
  const fs::path bogus = work_dir() / "bogus.tbw";
  std::ofstream(bogus) << "certainly not a weight container";
  const auto corpus = make_corpus("eval3", 2);
  auto r = run("eval --data " + corpus.string() + " --model " + bogus.string());
  CHECK(r.exit_code == 3);
  CHECK(r.err.find("model error") != std::string::npos);
}

TEST_CASE("eval writes a report and is deterministic") {
  const auto corpus = make_corpus("evalset", 3);
  const std::string report = (work_dir() / "report.json").string();
  const std::string roc = (work_dir() / "roc.csv").string();
  const std::string svg_dir = (work_dir() / "figs").string();
  const std::string args = "eval --data " + corpus.string() + " --model " +
                           model_path + " --report " + report + " --roc " +
                           roc + " --svg-dir " + svg_dir;
  auto a = run(args);
  REQUIRE(a.exit_code == 0);
  CHECK(a.out.find("\"accuracy\"") != std::string::npos);
  CHECK(a.out.find("\"confusion\"") != std::string::npos);
  CHECK(fs::exists(report));
  CHECK(fs::exists(roc));
  CHECK(fs::exists(fs::path(svg_dir) / "confusion.svg"));
  CHECK(fs::exists(fs::path(svg_dir) / "heatmap.svg"));

  auto b = run(args);
  REQUIRE(b.exit_code == 0);
  CHECK(a.out == b.out);
}

TEST_CASE("eval rejects a corpus whose class has no decodable image") {
  const fs::path root = work_dir() / "oneclass";
  for (const char* cls : {"Normal", "Tuberculosis"}) {
    fs::create_directories(root / cls);
  }
  tbnet::ImageF img(32, 32);
  img.setConstant(0.4f);
  tbnet::write_pgm((root / "Normal" / "a.pgm").string(), img);
  tbnet::write_pgm((root / "Normal" / "b.pgm").string(), img);
  std::ofstream(root / "Tuberculosis" / "c.pgm") << "garbage";
  auto r = run("eval --data " + root.string() + " --model " + model_path);
  CHECK(r.exit_code == 2);
}

TEST_CASE("predict emits one json line per input") {
  const auto corpus = make_corpus("predictset", 1);
  const std::string img_a = (corpus / "Normal" / "s0.pgm").string();
  const std::string img_b = (corpus / "Tuberculosis" / "s0.pgm").string();
  auto r = run("predict --model " + model_path + " --input " + img_a +
               " --input " + img_b);
  REQUIRE(r.exit_code == 0);
  CHECK(count_lines(r.out) == 2);
  CHECK(r.out.find("\"label\"") != std::string::npos);
  CHECK(r.out.find("\"confidence\"") != std::string::npos);
  CHECK(r.out.find("\"precision\":\"f32\"") != std::string::npos);
  CHECK(r.out.find(img_a) != std::string::npos);
  CHECK(r.out.find(img_b) != std::string::npos);

  auto f = run("predict --model " + model_path + " --input " + img_a +
               " --fp16");
  REQUIRE(f.exit_code == 0);
  CHECK(f.out.find("\"precision\":\"f16\"") != std::string::npos);
  CHECK(f.err.find("quantizing") != std::string::npos);

  const fs::path junk = work_dir() / "junk.pgm";
  std::ofstream(junk) << "not an image";
  CHECK(run("predict --model " + model_path + " --input " + junk.string())
            .exit_code == 2);
  CHECK(run("predict --model " + (work_dir() / "absent.tbw").string() +
            " --input " + img_a)
            .exit_code == 3);
}

TEST_CASE("quantize produces a half container and a divergence report") {
  const std::string half = (work_dir() / "half.tbw").string();
  auto r = run("quantize --model " + model_path + " --out " + half +
               " --check-n 2 --seed 1");
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("\"argmax_agreement\"") != std::string::npos);
  CHECK(r.out.find("\"max_abs_logit_diff\"") != std::string::npos);
  auto loaded = tbnet::load_model(half);
  CHECK(loaded.model.precision == tbnet::DType::f16);

  const std::string again = (work_dir() / "half2.tbw").string();
  auto r2 = run("quantize --model " + half + " --out " + again);
  REQUIRE(r2.exit_code == 0);
  CHECK(r2.err.find("already half precision") != std::string::npos);
  CHECK(slurp(half) == slurp(again));  // idempotent at the byte level
}

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

#include "tbnet/data.hpp"
#include "tbnet/errors.hpp"
#include "tbnet/fp16.hpp"
#include "tbnet/metrics.hpp"
#include "tbnet/model.hpp"
#include "tbnet/model_io.hpp"
#include "tbnet/train.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitModel = 3;

struct TrainArgs {
  std::string data;
  int synth = 0;
  std::string preset = "tiny";
  int epochs = 20;
  int batch = 32;
  double lr = 0.001;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  std::string out;
  double train_ratio = 0.8;
  double val_ratio = 0.1;
  int synth_size = 64;
  int checkpoint_every = 0;
  int threads = 1;
  bool no_augment = false;
};

int run_train(const TrainArgs& a) {
  if (a.data.empty() == (a.synth == 0)) {
    std::cerr << "error: exactly one of --data and --synth is required\n";
    return kExitUsage;
  }
  tbnet::SplitRatios ratios{a.train_ratio, a.val_ratio,
                            1.0 - a.train_ratio - a.val_ratio};
  tbnet::DatasetIndex index =
      a.synth > 0 ? tbnet::synth_blob_dataset(a.synth, a.synth_size, a.seed,
                                              ratios)
                  : tbnet::load_corpus(a.data, ratios, a.seed);
  auto model =
      tbnet::build_model<float>(tbnet::spec_preset(a.preset), a.seed);
  tbnet::OptimizerState<float> opt;
  opt.base_lr = static_cast<float>(a.lr);
  opt.momentum = static_cast<float>(a.momentum);
  tbnet::TrainConfig config;
  config.epochs = a.epochs;
  config.batch_size = a.batch;
  config.seed = a.seed;
  config.augment = !a.no_augment;
  config.checkpoint_cadence = a.checkpoint_every;
  if (a.checkpoint_every > 0) {
    config.checkpoint_hook = [&](const tbnet::Model<float>& m, int epoch) {
      tbnet::save_model(const_cast<tbnet::Model<float>&>(m),
                        a.out + ".ckpt" + std::to_string(epoch), &opt);
    };
  }
  auto history = tbnet::train(model, index, config, opt);
  for (const auto& s : history) {
    json line{{"epoch", s.epoch},
              {"loss", s.loss},
              {"accuracy", s.accuracy},
              {"lr", s.lr}};
    std::cout << line.dump() << "\n";
  }
  if (index.count(tbnet::Split::val, 0) + index.count(tbnet::Split::val, 1) >
      0) {
    auto val = tbnet::evaluate(model, index, tbnet::Split::val, a.batch);
    std::cerr << "val accuracy: " << val.accuracy << "\n";
  }
  tbnet::save_model(model, a.out);
  std::cerr << "saved model to " << a.out << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string data;
  std::string model;
  std::string report;
  std::string roc;
  std::string svg_dir;
  std::uint64_t seed = 0;
  int batch = 32;
};

int run_eval(const EvalArgs& a) {
  auto loaded = tbnet::load_model(a.model);
  // the whole directory is treated as the evaluation set
  auto index = tbnet::load_corpus(a.data, {0.0, 0.0, 1.0}, a.seed);
  auto outcome =
      tbnet::evaluate(loaded.model, index, tbnet::Split::test, a.batch);
  auto cm = tbnet::confusion(outcome.predictions, outcome.truths);

  tbnet::RocCurve roc;
  bool have_roc = true;
  try {
    roc = tbnet::roc_auc(outcome.scores, outcome.truths);
  } catch (const std::invalid_argument& e) {
    have_roc = false;
    std::cerr << "warning: ROC unavailable: " << e.what() << "\n";
  }
  auto report = tbnet::classification_report(cm, roc);
  if (!a.report.empty()) tbnet::emit_report_json(report, a.report);
  if (have_roc && !a.roc.empty()) tbnet::emit_roc_csv(roc, a.roc);
  if (!a.svg_dir.empty()) {
    fs::create_directories(a.svg_dir);
    tbnet::emit_confusion_svg(cm, (fs::path(a.svg_dir) / "confusion.svg").string());
    if (have_roc) {
      tbnet::emit_roc_svg(roc, (fs::path(a.svg_dir) / "roc.svg").string());
    }
    tbnet::emit_heatmap_svg(report,
                            (fs::path(a.svg_dir) / "heatmap.svg").string());
  }
  std::cout << tbnet::report_to_json(report);
  return kExitOk;
}

struct PredictArgs {
  std::string model;
  std::vector<std::string> inputs;
  bool fp16 = false;
  bool pretty = false;
};

int run_predict(const PredictArgs& a) {
  auto loaded = tbnet::load_model(a.model);
  if (a.fp16 && loaded.model.precision != tbnet::DType::f16) {
    std::cerr << "notice: quantizing single-precision model on the fly\n";
    tbnet::quantize_model(loaded.model);
  }
  for (const auto& input : a.inputs) {
    tbnet::ImageF img = tbnet::normalize(tbnet::decode_image(input));
    tbnet::Tensor x = tbnet::image_to_tensor(tbnet::center_crop(img));
    auto logits = loaded.model.precision == tbnet::DType::f16
                      ? tbnet::infer_mixed(loaded.model, x)
                      : loaded.model.forward(x, tbnet::RunMode{});
    auto probs = tbnet::softmax(tbnet::logits_matrix(logits));
    const bool tb = probs(0, 1) >= probs(0, 0);
    json line{{"label", tb ? "Tuberculosis" : "Normal"},
              {"confidence", static_cast<double>(tb ? probs(0, 1) : probs(0, 0))},
              {"precision", tbnet::dtype_name(loaded.model.precision)},
              {"input", input}};
    std::cout << (a.pretty ? line.dump(2) : line.dump()) << "\n";
  }
  return kExitOk;
}

struct QuantizeArgs {
  std::string model;
  std::string out;
  int check_n = 0;
  std::uint64_t seed = 0;
};

int run_quantize(const QuantizeArgs& a) {
  auto loaded = tbnet::load_model(a.model);
  if (loaded.model.precision == tbnet::DType::f16) {
    std::cerr << "notice: input is already half precision, copying as is\n";
    tbnet::save_model(loaded.model, a.out);
    return kExitOk;
  }
  auto single = tbnet::load_model(a.model);  // keep a single-precision copy
  tbnet::quantize_model(loaded.model);
  tbnet::save_model(loaded.model, a.out);
  if (a.check_n > 0) {
    auto rep = tbnet::divergence(single.model, loaded.model, a.check_n,
                                 a.seed);
    std::cout << tbnet::divergence_to_json(rep);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CNN tuberculosis screening toolkit"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a classifier");
  train->add_option("--data", ta.data, "Corpus root (Normal/, Tuberculosis/)");
  train->add_option("--synth", ta.synth, "Synthetic blob samples per class");
  train->add_option("--preset", ta.preset, "Model preset: tiny|large");
  train->add_option("--epochs", ta.epochs, "Training epochs");
  train->add_option("--batch", ta.batch, "Batch size");
  train->add_option("--lr", ta.lr, "Base learning rate");
  train->add_option("--momentum", ta.momentum, "Momentum coefficient");
  train->add_option("--seed", ta.seed, "Seed for init/shuffle/augmentation");
  train->add_option("--out", ta.out, "Output model file")->required();
  train->add_option("--train-ratio", ta.train_ratio, "Train split ratio");
  train->add_option("--val-ratio", ta.val_ratio, "Validation split ratio");
  train->add_option("--synth-size", ta.synth_size, "Synthetic image size");
  train->add_option("--checkpoint-every", ta.checkpoint_every,
                    "Checkpoint cadence in epochs (0 = off)");
  train->add_option("--threads", ta.threads, "Worker threads (1 = deterministic)");
  train->add_flag("--no-augment", ta.no_augment, "Disable augmentation");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Evaluate a model on a corpus");
  eval->add_option("--data", ea.data, "Corpus root")->required();
  eval->add_option("--model", ea.model, "Model file")->required();
  eval->add_option("--report", ea.report, "Report JSON output path");
  eval->add_option("--roc", ea.roc, "ROC CSV output path");
  eval->add_option("--svg-dir", ea.svg_dir, "Directory for SVG figures");
  eval->add_option("--seed", ea.seed, "Seed");
  eval->add_option("--batch", ea.batch, "Batch size");

  PredictArgs pa;
  auto* predict = app.add_subcommand("predict", "Classify single images");
  predict->add_option("--model", pa.model, "Model file")->required();
  predict->add_option("--input", pa.inputs, "Input image(s)")->required();
  predict->add_flag("--fp16", pa.fp16, "Use half-precision inference");
  predict->add_flag("--pretty", pa.pretty, "Human-readable JSON");

  QuantizeArgs qa;
  auto* quantize =
      app.add_subcommand("quantize", "Convert a model to half storage");
  quantize->add_option("--model", qa.model, "Input model file")->required();
  quantize->add_option("--out", qa.out, "Output model file")->required();
  quantize->add_option("--check-n", qa.check_n,
                       "Random inputs for the divergence report");
  quantize->add_option("--seed", qa.seed, "Seed for the divergence inputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return run_train(ta);
    if (*eval) return run_eval(ea);
    if (*predict) return run_predict(pa);
    if (*quantize) return run_quantize(qa);
  } catch (const tbnet::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const tbnet::FormatError& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return kExitModel;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitModel;
  }
  return kExitUsage;
}

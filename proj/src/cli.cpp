#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>

#include <CLI11.hpp>

#include "gramsr/corpus.hpp"
#include "gramsr/degrade.hpp"
#include "gramsr/error.hpp"
#include "gramsr/service.hpp"
#include "gramsr/trainer.hpp"

namespace gramsr {

namespace {

struct UsageError : Error {
  using Error::Error;
};

std::string resolve_config(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("GRAMSR_CONFIG"); env && *env) return env;
  throw UsageError("a run config is required (--config or GRAMSR_CONFIG)");
}

// Largest top-left crop whose sides satisfy every divisibility constraint of
// the model.
Image fit_to_model(const Image& hq, const RunConfig& cfg) {
  std::size_t m = std::lcm(cfg.degradation.downscale_factor, 4 * cfg.codec_stride);
  m = std::lcm(m, cfg.conditioning_encoder.patch_size);
  m = std::lcm(m, cfg.gram_encoder.patch_size);
  const std::size_t h = hq.height / m * m, w = hq.width / m * m;
  if (h == 0 || w == 0) throw SizeError("image smaller than " + std::to_string(m) + " pixels");
  return crop(hq, 0, 0, h, w);
}

Image as_rgb(const Image& img) {
  if (img.channels == 3) return img;
  Image out(img.height, img.width, 3);
  for (std::size_t i = 0; i < img.size(); ++i)
    for (int c = 0; c < 3; ++c) out.data[3 * i + c] = img.data[i];
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv) {
  CLI::App app{"gramsr: one-step diffusion super-resolution with triple guidance"};
  app.require_subcommand(1);

  std::string config_path, ckpt_path, in_path, out_path, gt_path, dir, mode_name = "residual";
  std::string host = "127.0.0.1";
  int stage = 0, port = kDefaultPort;
  std::uint64_t seed = 0;
  GuidanceScales scales;
  std::vector<double> lgram_grid{0.25, 0.5, 0.75, 1.0};

  auto add_scales = [&](CLI::App* c) {
    c->add_option("--lpix", scales.lambda_pix, "pixel guidance scale");
    c->add_option("--lsem", scales.lambda_sem, "semantic guidance scale");
    c->add_option("--lgram", scales.lambda_gram, "texture guidance scale");
    c->add_option("--mode", mode_name, "literal or residual")->check(CLI::IsMember({"literal", "residual"}));
  };

  auto* pretrain = app.add_subcommand("pretrain", "train the base denoiser (stage 0)");
  pretrain->add_option("--config", config_path, "run config JSON");
  pretrain->add_option("--out", out_path, "output checkpoint")->required();

  auto* train = app.add_subcommand("train", "train one LoRA stage");
  train->add_option("--stage", stage, "1, 2 or 3")->required()->check(CLI::Range(1, 3));
  train->add_option("--ckpt", ckpt_path, "checkpoint of the previous stage")->required();
  train->add_option("--config", config_path, "run config JSON");
  train->add_option("--out", out_path, "output checkpoint")->required();

  auto* infer_cmd = app.add_subcommand("infer", "restore one LQ image");
  infer_cmd->add_option("--ckpt", ckpt_path)->required();
  infer_cmd->add_option("--in", in_path, "LQ image")->required();
  infer_cmd->add_option("--out", out_path, "output PNG")->required();
  add_scales(infer_cmd);

  auto* sweep_cmd = app.add_subcommand("sweep", "lambda_gram sweep to CSV");
  sweep_cmd->add_option("--ckpt", ckpt_path)->required();
  sweep_cmd->add_option("--in", in_path, "LQ image")->required();
  sweep_cmd->add_option("--gt", gt_path, "HQ reference");
  sweep_cmd->add_option("--grid", lgram_grid, "lambda_gram values")->delimiter(',');
  sweep_cmd->add_option("--out", out_path, "CSV path (stdout if omitted)");
  add_scales(sweep_cmd);

  auto* eval_cmd = app.add_subcommand("evaluate", "validate a checkpoint on a folder of HQ images");
  eval_cmd->add_option("--ckpt", ckpt_path)->required();
  eval_cmd->add_option("--dir", dir, "folder of HQ images")->required();
  eval_cmd->add_option("--seed", seed, "degradation seed");
  add_scales(eval_cmd);

  auto* degrade_cmd = app.add_subcommand("degrade", "write LQ/HQ pairs");
  degrade_cmd->add_option("--in", in_path, "HQ image or folder")->required();
  degrade_cmd->add_option("--out", out_path, "output folder")->required();
  degrade_cmd->add_option("--config", config_path, "run config JSON (degradation settings)");
  degrade_cmd->add_option("--seed", seed, "degradation seed");

  auto* serve_cmd = app.add_subcommand("serve", "HTTP inference service");
  serve_cmd->add_option("--ckpt", ckpt_path)->required();
  serve_cmd->add_option("--config", config_path, "unused; the checkpoint carries its config");
  serve_cmd->add_option("--port", port, "listen port");
  serve_cmd->add_option("--host", host, "listen address");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    const GuidanceMode mode = guidance_mode_from_string(mode_name);
    TrainHooks hooks;
    hooks.log = &std::cerr;

    if (*pretrain) {
      const RunConfig cfg = load_config(resolve_config(config_path));
      save_checkpoint(pretrain_base(cfg, hooks), out_path);
    } else if (*train) {
      const RunConfig cfg = load_config(resolve_config(config_path));
      const Checkpoint ck = load_checkpoint(ckpt_path);
      save_checkpoint(train_stage(stage, ck, cfg, hooks), out_path);
    } else if (*infer_cmd) {
      const InferenceService service(load_checkpoint(ckpt_path));
      const auto png = service.infer_png(as_rgb(load_image(in_path)), scales, mode);
      std::ofstream out(out_path, std::ios::binary);
      if (!out) throw IoError("cannot write " + out_path);
      out.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
    } else if (*sweep_cmd) {
      const GuidedModel model(load_checkpoint(ckpt_path));
      std::vector<GuidanceScales> grid;
      for (double l : lgram_grid) grid.push_back({scales.lambda_pix, scales.lambda_sem, l});
      std::optional<Image> gt;
      if (!gt_path.empty()) gt = as_rgb(load_image(gt_path));
      write_text(out_path, sweep(model, as_rgb(load_image(in_path)), grid, mode, gt).to_csv());
    } else if (*eval_cmd) {
      const Checkpoint ck = load_checkpoint(ckpt_path);
      const FrozenParts frozen(ck.config);
      std::vector<Image> hq;
      for (const auto& img : load_image_folder(dir)) hq.push_back(fit_to_model(as_rgb(img), ck.config));
      if (hq.empty()) throw DataError("no images in " + dir);
      const MetricReport r = validate(ck, build_dataset(hq, ck.config, frozen, seed), scales, mode);
      nlohmann::json j{{"images", hq.size()}, {"stage", ck.stage}, {"psnr", r.psnr}, {"ssim", r.ssim}};
      for (const auto& [k, v] : r.auxiliary) j[k] = v;
      std::cout << j.dump(2) << "\n";
    } else if (*degrade_cmd) {
      RunConfig cfg;
      if (!config_path.empty() || std::getenv("GRAMSR_CONFIG")) cfg = load_config(resolve_config(config_path));
      cfg.finalize();
      namespace fs = std::filesystem;
      std::vector<fs::path> inputs;
      if (fs::is_directory(in_path)) {
        for (const auto& e : fs::directory_iterator(in_path))
          if (e.is_regular_file()) inputs.push_back(e.path());
        std::sort(inputs.begin(), inputs.end());
      } else {
        inputs.push_back(in_path);
      }
      fs::create_directories(out_path);
      Rng seeds(seed);
      for (const auto& p : inputs) {
        const Image hq = fit_to_model(as_rgb(load_image(p)), cfg);
        const ImagePair pair = make_pair(hq, cfg.degradation, seeds.next_u64());
        const auto stem = p.stem().string();
        save_image(fs::path(out_path) / (stem + "_lq.png"), pair.lq);
        save_image(fs::path(out_path) / (stem + "_hq.png"), pair.hq);
      }
    } else if (*serve_cmd) {
      const InferenceService service(load_checkpoint(ckpt_path));
      HttpServer server(service);
      std::cerr << "serving on http://" << host << ":" << port << std::endl;
      server.run(host, port);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace gramsr

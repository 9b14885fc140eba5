#include "ciftts/experiment.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace ciftts::expt {

dsp::MfccMatrix mfcc_of_mel_tensor(const Tensor& mel) {
    if (mel.ndim() != 2 || mel.dim(1) != dsp::kNumMels)
        throw std::invalid_argument("mfcc_of_mel_tensor: expected T x 80 mel, got " +
                                    shape_str(mel.shape()));
    dsp::MelSpectrogram m;
    m.t = mel.dim(0);
    m.frames = mel.values();
    return dsp::mfcc(m);
}

EvalReport evaluate_held_out(const TtsModel& model, const Config& cfg,
                             const data::Manifest& manifest) {
    const FwdCtx eval_ctx{};
    EvalReport rep;
    std::vector<eval::LabeledEmbedding> embeddings;
    double l1_sum = 0.0, mcd_sum = 0.0;

    for (const auto& utt : manifest.utterances) {
        if (!utt.held_out) continue;
        Trainer::Sample s = Trainer::make_sample(utt, cfg);

        // Teacher-forced mel L1.
        auto forced = model.forward(s.phonemes, s.ref_wave, s.ref_mel, &s.targets, eval_ctx);
        l1_sum += model.mel_l1(forced, s.mel_target).item();

        // Free-running synthesis, MCD-DTW against ground truth.
        auto free = model.forward(s.phonemes, s.ref_wave, s.ref_mel, nullptr, eval_ctx);
        dsp::MfccMatrix gt = mfcc_of_mel_tensor(s.mel_target);
        dsp::MfccMatrix pred = mfcc_of_mel_tensor(free.mel);
        mcd_sum += eval::mcd_dtw(gt, pred).value;

        embeddings.push_back({utt.speaker_id, free.speaker.values()});
        ++rep.n_utterances;
    }
    if (rep.n_utterances == 0)
        throw std::invalid_argument("evaluate_held_out: manifest has no held-out utterances");

    rep.mel_l1 = l1_sum / rep.n_utterances;
    rep.mcd_dtw = mcd_sum / rep.n_utterances;
    rep.similarity = eval::similarity_report(embeddings);
    return rep;
}

namespace {

AblationRow train_variant(const std::string& name, Config cfg, const data::Manifest& manifest,
                          int steps) {
    cfg.max_steps = steps;
    cfg.checkpoint_every = steps + 1;  // no checkpoints during ablation runs
    AblationRow row;
    row.name = name;
    row.cfg = cfg;
    TtsModel model(cfg);
    Trainer trainer(model, cfg, manifest);
    StepMetrics last;
    for (int i = 0; i < steps; ++i) last = trainer.train_step();
    row.final_train_loss = last.total;
    row.report = evaluate_held_out(model, cfg, manifest);
    return row;
}

}  // namespace

std::vector<AblationRow> run_ablation(const Config& base, const data::Manifest& manifest,
                                      int steps) {
    std::vector<AblationRow> rows;
    {
        Config c = base;
        c.negation_enabled = true;
        rows.push_back(train_variant("baseline", c, manifest, steps));
    }
    {
        Config c = base;
        c.negation_enabled = false;
        rows.push_back(train_variant("no_negation", c, manifest, steps));
    }
    {
        Config c = base;
        c.n_streams = 1;
        rows.push_back(train_variant("single_stream", c, manifest, steps));
    }
    {
        Config c = base;
        c.stream_fusion = StreamFusion::kConcat;
        rows.push_back(train_variant("concat_fusion", c, manifest, steps));
    }
    {
        Config c = base;
        c.injection_site = InjectionSite::kEncoder;
        rows.push_back(train_variant("inject_encoder", c, manifest, steps));
    }
    {
        Config c = base;
        c.injection_site = InjectionSite::kDecoder;
        rows.push_back(train_variant("inject_decoder", c, manifest, steps));
    }
    return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << std::left << std::setw(16) << "variant" << std::right << std::setw(12) << "train_loss"
       << std::setw(10) << "mel_l1" << std::setw(10) << "mcd_dtw" << std::setw(10) << "margin"
       << "\n";
    os << std::string(58, '-') << "\n";
    os << std::fixed << std::setprecision(4);
    for (const auto& r : rows) {
        os << std::left << std::setw(16) << r.name << std::right << std::setw(12)
           << r.final_train_loss << std::setw(10) << r.report.mel_l1 << std::setw(10)
           << r.report.mcd_dtw << std::setw(10) << r.report.similarity.margin << "\n";
    }
    return os.str();
}

}  // namespace ciftts::expt

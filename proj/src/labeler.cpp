#include "sgen/labeler.hpp"

#include "sgen/mlp.hpp"

namespace sgen {

LabeledSamples propagate_labels(const SampleChain& chain) {
    if (chain.seed_label < 0 || chain.seed_label > 9)
        throw LabelOutOfRange("propagate_labels: chain has no valid seed label");
    LabeledSamples out;
    out.images = chain.samples;
    out.labels.assign(static_cast<std::size_t>(chain.length()), chain.seed_label);
    return out;
}

std::vector<char> filter_by_classifier(const Eigen::MatrixXd& samples, int label,
                                       const MlpClassifier& clf, int epoch,
                                       const FilterConfig& filter) {
    std::vector<char> mask(static_cast<std::size_t>(samples.cols()), 1);
    if (filter.mode == FilterMode::All || epoch < filter.warmup_epochs) return mask;
    std::vector<int> pred = predict(clf, samples);
    for (std::size_t i = 0; i < pred.size(); ++i) mask[i] = pred[i] == label ? 1 : 0;
    return mask;
}

} // namespace sgen

#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "pivotcap/attention_mask.hpp"
#include "pivotcap/bpe.hpp"
#include "pivotcap/model_params.hpp"
#include "pivotcap/tape.hpp"

namespace pivotcap {

// Differentiable view of the parameters: every tensor becomes a tape input
// node so gradients land in tape.grad(...). One TapeModel per forward/backward
// round; the tape grows with each graph built on it.
template <typename T>
struct TapeModel {
    Tape<T> tape;
    ModelConfig cfg;
    std::unordered_map<std::string, typename Tape<T>::Index> params;

    typename Tape<T>::Index node(const std::string& name) const;
};

template <typename T>
TapeModel<T> make_tape_model(const ModelParams& params);

// Visual features (n_regions x d_vis) -> encoder output (n_regions x d_model).
template <typename T>
typename Tape<T>::Index encode_tape(TapeModel<T>& m, const Eigen::MatrixXf& visual);

// Full decoder pass over [keywords | indicator | caption_in] with the given
// attention mask. Returns logits for the caption rows only (len(caption_in)
// x vocab). keyword_tokens carries the concatenated keyword token ids in
// retrieval order; indicator_index selects the style embedding row.
template <typename T>
typename Tape<T>::Index decode_tape(TapeModel<T>& m, typename Tape<T>::Index enc_out,
                                    const TokenSequence& keyword_tokens, int indicator_index,
                                    const TokenSequence& caption_in, const BoolMat& mask);

// Sum of negative log-likelihood over the real target positions of one
// sample. target_real marks which rows of logits count (padding is skipped).
template <typename T>
typename Tape<T>::Index caption_nll_sum(Tape<T>& tape, typename Tape<T>::Index logits,
                                        const TokenSequence& targets,
                                        const std::vector<bool>& target_real);

// Batch loss: total NLL over all real caption tokens divided by their count.
// Prompt positions never contribute because decode_tape only emits caption
// logits in the first place.
template <typename T>
typename Tape<T>::Index prompt_lm_loss(Tape<T>& tape,
                                       const std::vector<typename Tape<T>::Index>& sample_logits,
                                       const std::vector<TokenSequence>& targets,
                                       const std::vector<std::vector<bool>>& target_real);

// Sinusoidal table rows [start, start+length). Computed in double and cast
// at use so float and double graphs share the same constants.
Eigen::MatrixXd sinusoidal_positions(int length, int d_model, int start = 0);

extern template struct TapeModel<float>;
extern template struct TapeModel<double>;
extern template TapeModel<float> make_tape_model<float>(const ModelParams&);
extern template TapeModel<double> make_tape_model<double>(const ModelParams&);
extern template Tape<float>::Index encode_tape<float>(TapeModel<float>&, const Eigen::MatrixXf&);
extern template Tape<double>::Index encode_tape<double>(TapeModel<double>&, const Eigen::MatrixXf&);
extern template Tape<float>::Index decode_tape<float>(TapeModel<float>&, Tape<float>::Index,
                                                      const TokenSequence&, int,
                                                      const TokenSequence&, const BoolMat&);
extern template Tape<double>::Index decode_tape<double>(TapeModel<double>&, Tape<double>::Index,
                                                        const TokenSequence&, int,
                                                        const TokenSequence&, const BoolMat&);
extern template Tape<float>::Index caption_nll_sum<float>(Tape<float>&, Tape<float>::Index,
                                                          const TokenSequence&,
                                                          const std::vector<bool>&);
extern template Tape<double>::Index caption_nll_sum<double>(Tape<double>&, Tape<double>::Index,
                                                            const TokenSequence&,
                                                            const std::vector<bool>&);
extern template Tape<float>::Index prompt_lm_loss<float>(Tape<float>&,
                                                         const std::vector<Tape<float>::Index>&,
                                                         const std::vector<TokenSequence>&,
                                                         const std::vector<std::vector<bool>>&);
extern template Tape<double>::Index prompt_lm_loss<double>(Tape<double>&,
                                                           const std::vector<Tape<double>::Index>&,
                                                           const std::vector<TokenSequence>&,
                                                           const std::vector<std::vector<bool>>&);

} // namespace pivotcap

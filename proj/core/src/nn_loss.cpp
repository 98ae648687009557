#include "wuyun/nn/loss.hpp"

namespace wuyun::nn {

HeadTargets make_targets(const std::vector<Token>& tokens, const Vocabulary& vocab) {
    HeadTargets out;
    const size_t n = tokens.size();
    for (auto& h : out.heads) h.assign(n, -1);
    out.cond_kinds.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const Token& t = tokens[i];
        out.heads[0][i] = int(t.kind);
        out.cond_kinds[i] = int(t.kind);
        switch (t.kind) {
            case TokenKind::Tempo: out.heads[1][i] = t.tempo; break;
            case TokenKind::Pos: out.heads[2][i] = vocab.position_id(t.pos); break;
            case TokenKind::Chord:
                out.heads[3][i] = Vocabulary::chord_id(t.chord_root, t.chord_quality);
                break;
            case TokenKind::Note:
                out.heads[4][i] = Vocabulary::pitch_id(t.pitch);
                out.heads[5][i] = t.velocity;
                out.heads[6][i] = vocab.duration_id(t.duration);
                break;
            default: break;
        }
    }
    return out;
}

std::vector<ModelStep> lm_input_steps(const std::vector<Token>& tokens, const Vocabulary& vocab,
                                      int max_bar_embed) {
    std::vector<Token> shifted;
    shifted.reserve(tokens.size());
    shifted.push_back(Token::bos());
    shifted.insert(shifted.end(), tokens.begin(), tokens.end() - (tokens.empty() ? 0 : 1));
    return encode_steps(shifted, vocab, max_bar_embed);
}

}  // namespace wuyun::nn

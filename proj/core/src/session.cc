#include <algorithm>

#include "em3/engine.h"
#include "em3/error.h"

namespace em3 {

std::shared_ptr<EngineResources> open_engine(const EngineConfig& config) {
  require(!config.model_path.empty(), ErrorCode::kConfig, "engine config has no model path");
  auto res = std::make_shared<EngineResources>();
  auto model = std::make_shared<const Model>(Model::load(config.model_path));
  res->model = model;
  if (config.embedder_endpoint.empty()) {
    res->embedder = std::make_shared<HashedNgramEmbedder>(config.embedding_dim);
  } else {
    res->embedder = std::make_shared<RemoteEmbedder>(config.embedder_endpoint,
                                                     config.embedding_dim, config.timeout);
  }
  res->cache = std::make_shared<MemoryCache>(config.cache_capacity);
  if (!config.use_memory) return res;

  std::optional<MemoryCodebooks> codebooks;
  if (!config.codebook_path.empty()) codebooks = load_codebooks(config.codebook_path);

  if (!config.bank_endpoint.empty()) {
    require(codebooks.has_value(), ErrorCode::kConfig,
            "a remote bank needs the codebook path for decoding");
    require(config.filter_threshold == 0.0, ErrorCode::kConfig,
            "the leakage filter needs local reference tokens; unavailable with a remote bank");
    res->remote = std::make_shared<BankClient>(config.bank_endpoint, std::move(*codebooks),
                                               config.timeout);
    return res;
  }

  require(!config.index_path.empty(), ErrorCode::kConfig, "engine config has no index path");
  auto index = std::make_shared<const RetrievalIndex>(RetrievalIndex::load(config.index_path));
  require(index->dim() == res->embedder->dim(), ErrorCode::kCompatibility,
          "index dim " + std::to_string(index->dim()) + " differs from embedder dim " +
              std::to_string(res->embedder->dim()));
  res->index = index;
  if (!config.bank_path.empty() && std::filesystem::exists(config.bank_path)) {
    res->bank = std::make_shared<MemoryBank>(MemoryBank::load(
        config.bank_path, model->config(), model->fingerprint(), std::move(codebooks)));
  } else {
    require(config.mode == StartMode::kCold, ErrorCode::kConfig,
            "warm start needs an existing bank file");
    res->bank = std::make_shared<MemoryBank>(model->config(), model->fingerprint(),
                                             std::move(codebooks));
  }
  return res;
}

Session::Session(std::shared_ptr<const EngineResources> resources, SessionOptions options)
    : res_(std::move(resources)), opt_(options) {
  require(res_ && res_->model, ErrorCode::kUsage, "session needs a model");
  const auto& cfg = res_->model->config();
  chunk_len_ = opt_.chunk_len > 0 ? opt_.chunk_len : cfg.chunk_len;
  n_refs_ = opt_.n_refs >= 0 ? opt_.n_refs : cfg.refs_per_chunk;
  require(opt_.filter_threshold >= 0.0 && opt_.filter_threshold <= 1.0, ErrorCode::kConfig,
          "filter threshold must lie in [0, 1]");
  if (res_->bank) {
    require(res_->bank->config() == cfg && res_->bank->model_hash() == res_->model->fingerprint(),
            ErrorCode::kCompatibility, "bank was written by a different model");
  }
  if (opt_.use_memory && (res_->index || res_->remote)) {
    require(res_->embedder != nullptr, ErrorCode::kUsage, "retrieval needs an embedder");
  }
  require(!(res_->remote && opt_.filter_threshold > 0.0), ErrorCode::kConfig,
          "the leakage filter is unavailable with a remote bank");
  kv_ = KVCache(cfg);
}

std::shared_ptr<const ExplicitMemory> Session::fetch_memory(std::uint64_t id) {
  if (res_->cache) {
    if (auto hit = res_->cache->get(id)) {
      ++stats_.cache_hits;
      return hit;
    }
  }
  ++stats_.cache_misses;
  require(res_->bank != nullptr, ErrorCode::kState, "no local bank to fetch memories from");
  std::shared_ptr<const ExplicitMemory> mem;
  if (res_->bank->contains(id)) {
    mem = std::make_shared<const ExplicitMemory>(res_->bank->get(id));
    ++stats_.bank_reads;
  } else if (opt_.mode == StartMode::kCold && res_->index && res_->index->contains(id)) {
    // Written once, then read back so a quantized bank serves the same decode.
    res_->bank->put(write_memory(*res_->model, res_->index->tokens(id), opt_.weight_mode, id));
    mem = std::make_shared<const ExplicitMemory>(res_->bank->get(id));
    ++stats_.cold_encodes;
  } else {
    fail(ErrorCode::kNotFound, "memory " + std::to_string(id) + " is in neither cache nor bank");
  }
  if (res_->cache) res_->cache->put(id, mem);
  return mem;
}

void Session::retrieve(std::span<const Token> query) {
  ++stats_.retrievals;
  active_.clear();
  active_ids_.clear();
  if (opt_.use_memory && n_refs_ > 0 && !query.empty()) {
    if (res_->remote) {
      try {
        auto hits = res_->remote->query(res_->embedder->embed(query),
                                        static_cast<std::uint32_t>(n_refs_));
        for (auto& h : hits) {
          h.memory.check_shape(res_->model->config());
          active_ids_.push_back(h.id);
          active_.push_back(std::make_shared<const ExplicitMemory>(std::move(h.memory)));
        }
      } catch (const Error& e) {
        if (!opt_.tolerant || e.code() != ErrorCode::kTransport) throw;
        ++stats_.remote_failures;
        active_.clear();
        active_ids_.clear();
      }
    } else if (res_->index && !res_->index->empty()) {
      const auto& index = *res_->index;
      const auto q = res_->embedder->embed(query);
      std::vector<SearchHit> kept;
      // Widen the search until the filter leaves n_refs candidates.
      for (int k = n_refs_;; k *= 2) {
        const auto found = index.search(q, k);
        kept = found.hits;
        if (opt_.filter_threshold > 0.0) {
          kept = filter_leakage(found.hits, history_, opt_.filter_threshold, index);
        }
        if (kept.size() >= static_cast<std::size_t>(n_refs_) || found.truncated ||
            static_cast<std::size_t>(k) >= index.size()) {
          stats_.filtered += found.hits.size() - kept.size();
          break;
        }
      }
      if (kept.size() > static_cast<std::size_t>(n_refs_)) kept.resize(n_refs_);
      for (const auto& hit : kept) {
        active_.push_back(fetch_memory(hit.id));
        active_ids_.push_back(hit.id);
      }
    }
  }
  stats_.memories_attached += active_.size();
  log_.push_back(active_ids_);
}

void Session::forward(std::span<const Token> tokens) {
  std::vector<const ExplicitMemory*> refs;
  refs.reserve(active_.size());
  for (const auto& m : active_) refs.push_back(m.get());
  const Logits logits = res_->model->forward_chunk(tokens, kv_, refs, chunk_len_);
  const auto last = logits.last();
  last_logits_.assign(last.begin(), last.end());
}

std::span<const float> Session::run_prompt(std::span<const Token> prompt) {
  require(!prompt.empty(), ErrorCode::kInput, "prompt is empty");
  res_->model->begin_sequence(kv_);
  // The whole prompt is the leakage probe from the first retrieval on.
  history_.assign(prompt.begin(), prompt.end());
  generated_.clear();
  active_.clear();
  active_ids_.clear();
  for (std::size_t at = 0; at < prompt.size(); at += static_cast<std::size_t>(chunk_len_)) {
    const auto chunk = prompt.subspan(at, std::min(prompt.size() - at, std::size_t(chunk_len_)));
    retrieve(chunk);
    forward(chunk);
  }
  stats_.prompt_tokens += prompt.size();
  since_retrieval_ = 0;
  started_ = true;
  return last_logits_;
}

std::vector<Token> Session::decode(int n_tokens) {
  require(n_tokens > 0, ErrorCode::kInput, "n_tokens must be positive");
  require(started_, ErrorCode::kState, "decode before run_prompt");
  std::vector<Token> out;
  out.reserve(static_cast<std::size_t>(n_tokens));
  for (int i = 0; i < n_tokens; ++i) {
    const auto best = std::max_element(last_logits_.begin(), last_logits_.end());
    const Token next = static_cast<Token>(best - last_logits_.begin());
    out.push_back(next);
    generated_.push_back(next);
    history_.push_back(next);
    ++stats_.generated_tokens;
    if (i + 1 == n_tokens) break;
    if (since_retrieval_ == chunk_len_) {
      const auto g = std::span<const Token>(generated_);
      // The query is the completed chunk, not the token about to be forwarded.
      retrieve(g.subspan(g.size() - 1 - static_cast<std::size_t>(chunk_len_),
                         static_cast<std::size_t>(chunk_len_)));
      since_retrieval_ = 0;
    }
    forward(std::span<const Token>(&next, 1));
    ++since_retrieval_;
  }
  return out;
}

std::vector<Token> Session::generate(std::span<const Token> prompt, int n_tokens) {
  run_prompt(prompt);
  return decode(n_tokens);
}

std::uint64_t expected_retrievals(std::uint64_t prompt_len, std::uint64_t n_generated,
                                  int chunk_len) {
  require(chunk_len > 0, ErrorCode::kInput, "chunk_len must be positive");
  const std::uint64_t l = static_cast<std::uint64_t>(chunk_len);
  const std::uint64_t prompt = (prompt_len + l - 1) / l;
  // Generated tokens 1..g-1 are forwarded; a retrieval precedes tokens l+1, 2l+1, ...
  const std::uint64_t decode = n_generated >= 2 ? (n_generated - 2) / l : 0;
  return prompt + decode;
}

}  // namespace em3

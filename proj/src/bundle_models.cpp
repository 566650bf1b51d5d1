#include "txt/bundle_models.hpp"

#include <cstring>

namespace txt {

ModelBundle bundle_from_itemcf(const CooccurrenceModel& model, const Vocabs& vocabs,
                               const DataConfig& dcfg,
                               const std::vector<CtxFieldSpec>& fields, std::string tag,
                               std::string created) {
  if (fields.size() != model.field_cards().size())
    throw ContractError("field specs do not match the fitted model");
  ModelBundle b;
  b.kind = "itemcf";
  b.tag = std::move(tag);
  b.created = std::move(created);
  b.precision = "wide";  // counts are stored as 64-bit reals
  b.config.emplace_back("config.item_vocab", std::to_string(model.n_items()));
  b.config.emplace_back("config.ctx_fields", ctx_fields_value(fields));
  append_data_config(b.config, dcfg);
  b.vocabs = vocabs;

  auto pack_doubles = [](const std::string& name, Shape shape, const std::vector<double>& data) {
    NamedArray arr;
    arr.name = name;
    arr.shape = std::move(shape);
    arr.width = 8;
    arr.bytes.resize(data.size() * 8);
    std::memcpy(arr.bytes.data(), data.data(), arr.bytes.size());
    return arr;
  };
  const auto n = static_cast<std::int64_t>(model.n_items());
  b.params.push_back(pack_doubles("cooc", {n, n}, model.cooc_matrix()));
  for (std::size_t f = 0; f < fields.size(); ++f)
    b.params.push_back(pack_doubles("ctxpop." + fields[f].name,
                                    {model.field_cards()[f], n}, model.ctx_tables()[f]));
  return b;
}

CooccurrenceModel itemcf_from_bundle(const ModelBundle& b) {
  if (b.kind != "itemcf") throw ContractError("bundle kind is " + b.kind + ", expected itemcf");
  const auto n_items = static_cast<std::int32_t>(std::stol(b.config_at("config.item_vocab")));
  const auto fields = parse_ctx_fields(b.config_at("config.ctx_fields"));
  std::vector<std::int32_t> cards;
  for (const auto& f : fields) cards.push_back(f.cardinality);
  CooccurrenceModel model(n_items, cards);

  auto unpack_doubles = [](const NamedArray& arr) {
    if (arr.width != 8) throw FormatError("array " + arr.name + " must be 8-byte reals");
    std::vector<double> out(arr.bytes.size() / 8);
    std::memcpy(out.data(), arr.bytes.data(), arr.bytes.size());
    return out;
  };
  std::vector<std::vector<double>> ctx_tables;
  for (const auto& f : fields) ctx_tables.push_back(unpack_doubles(b.param("ctxpop." + f.name)));
  model.set_state(unpack_doubles(b.param("cooc")), std::move(ctx_tables));
  return model;
}

}  // namespace txt

export * from "./config.js";
export * from "./tensor.js";
export * from "./weights.js";
export * from "./model.js";
export * from "./image.js";
export * from "./tokenizer.js";
export * from "./schedule.js";
export * from "./aggregate.js";
export * from "./rmap.js";
export * from "./relevancy.js";
export * from "./extract.js";
export * from "./benchmark.js";

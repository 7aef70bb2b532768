export * from "./schema.js";
export * from "./stats.js";
export * from "./svg.js";
export * from "./plots.js";

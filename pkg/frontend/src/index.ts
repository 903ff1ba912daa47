export * from "./types.js";
export * from "./overlays.js";
export * from "./state.js";
export * from "./api.js";
export * from "./canvas.js";

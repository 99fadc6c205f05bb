/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_simulation_free: (a: number, b: number) => void;
export const exact_profile: (a: number, b: number) => [number, number, number, number];
export const grid_nodes: () => [number, number];
export const integrability_table: (a: number, b: number, c: number) => [number, number, number, number];
export const simulation_estimate: (a: number) => [number, number, number, number];
export const simulation_exact: (a: number) => [number, number, number, number];
export const simulation_l2_error: (a: number) => [number, number, number];
export const simulation_new: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const simulation_step: (a: number, b: number) => [number, number];
export const simulation_time: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;

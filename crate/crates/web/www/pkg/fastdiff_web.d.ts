/* tslint:disable */
/* eslint-disable */

/**
 * Particle system started from `U(1, .)`, advanced a few steps at a time.
 */
export class Simulation {
    free(): void;
    [Symbol.dispose](): void;
    estimate(): Float64Array;
    exact(): Float64Array;
    l2_error(): number;
    /**
     * `oracle` drives the particles with the exact coefficient instead of
     * the estimated density.
     */
    constructor(m: number, n: number, dt: number, seed: number, oracle: boolean);
    step(count: number): void;
    /**
     * Elapsed time; the exact reference is `U(time + 1, .)`.
     */
    time(): number;
}

/**
 * Barenblatt profile `U(t, x)` on the grid.
 */
export function exact_profile(m: number, t: number): Float64Array;

/**
 * Grid nodes shared by every profile returned here.
 */
export function grid_nodes(): Float64Array;

/**
 * Finiteness of the three integral families for each `m`, as JSON rows
 * `{m, family, expected_finite, reduced, direct}`.
 */
export function integrability_table(ms: Float64Array, horizon: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_simulation_free: (a: number, b: number) => void;
    readonly exact_profile: (a: number, b: number) => [number, number, number, number];
    readonly grid_nodes: () => [number, number];
    readonly integrability_table: (a: number, b: number, c: number) => [number, number, number, number];
    readonly simulation_estimate: (a: number) => [number, number, number, number];
    readonly simulation_exact: (a: number) => [number, number, number, number];
    readonly simulation_l2_error: (a: number) => [number, number, number];
    readonly simulation_new: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly simulation_step: (a: number, b: number) => [number, number];
    readonly simulation_time: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;

/* tslint:disable */
/* eslint-disable */

/**
 * Simulation result handed to JavaScript as flat typed arrays.
 */
export class Simulation {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    times(): Float64Array;
    values(): Float64Array;
    vols(): Float64Array;
    readonly points: number;
}

export function bs_parameters(sigma: number, x0: number, order: number): string;

/**
 * Returns the comparison table as JSON.
 */
export function expected_signature_check(ell_json: string, x0: number, maturity: number, word_order: number, n_paths: number, steps: number, seed: number): string;

export function simulate_model(ell_json: string, x0: number, n_paths: number, steps: number, horizon: number, seed: number): Simulation;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_simulation_free: (a: number, b: number) => void;
    readonly bs_parameters: (a: number, b: number, c: number) => [number, number, number, number];
    readonly expected_signature_check: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
    readonly simulate_model: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
    readonly simulation_points: (a: number) => number;
    readonly simulation_times: (a: number) => [number, number];
    readonly simulation_values: (a: number) => [number, number];
    readonly simulation_vols: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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

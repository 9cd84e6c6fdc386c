export class HeatDemo {
    __destroy_into_raw() {
        const ptr = this.__wbg_ptr;
        this.__wbg_ptr = 0;
        HeatDemoFinalization.unregister(this);
        return ptr;
    }
    free() {
        const ptr = this.__destroy_into_raw();
        wasm.__wbg_heatdemo_free(ptr, 0);
    }
    /**
     * @param {number} dt_ms
     */
    advance(dt_ms) {
        wasm.heatdemo_advance(this.__wbg_ptr, dt_ms);
    }
    clear() {
        wasm.heatdemo_clear(this.__wbg_ptr);
    }
    /**
     * Records a gaze at the current time; coordinates are clamped to the unit square.
     * @param {number} x
     * @param {number} y
     */
    gaze(x, y) {
        wasm.heatdemo_gaze(this.__wbg_ptr, x, y);
    }
    /**
     * @returns {number}
     */
    height() {
        const ret = wasm.heatdemo_height(this.__wbg_ptr);
        return ret >>> 0;
    }
    constructor() {
        const ret = wasm.heatdemo_new();
        this.__wbg_ptr = ret;
        HeatDemoFinalization.register(this, this.__wbg_ptr, this);
        return this;
    }
    /**
     * Row-major densities scaled to [0, 1]. Cells below `threshold` of the
     * peak are zeroed when `threshold` is in (0, 1].
     * @param {number} threshold
     * @returns {Float64Array}
     */
    render(threshold) {
        const ret = wasm.heatdemo_render(this.__wbg_ptr, threshold);
        var v1 = getArrayF64FromWasm0(ret[0], ret[1]).slice();
        wasm.__wbindgen_free(ret[0], ret[1] * 8, 8);
        return v1;
    }
    /**
     * @param {number} h
     */
    set_bandwidth(h) {
        wasm.heatdemo_set_bandwidth(this.__wbg_ptr, h);
    }
    /**
     * @returns {number}
     */
    width() {
        const ret = wasm.heatdemo_width(this.__wbg_ptr);
        return ret >>> 0;
    }
}
if (Symbol.dispose) HeatDemo.prototype[Symbol.dispose] = HeatDemo.prototype.free;

/**
 * A room of simulated audiences, some nodding and some shaking.
 */
export class TrailDemo {
    __destroy_into_raw() {
        const ptr = this.__wbg_ptr;
        this.__wbg_ptr = 0;
        TrailDemoFinalization.unregister(this);
        return ptr;
    }
    free() {
        const ptr = this.__destroy_into_raw();
        wasm.__wbg_traildemo_free(ptr, 0);
    }
    /**
     * Vertical over horizontal trail extent of the current frame.
     * @returns {number}
     */
    dominance() {
        const ret = wasm.traildemo_dominance(this.__wbg_ptr);
        return ret;
    }
    /**
     * `nodders` of the `n` audiences nod at `freq_hz`; the rest shake.
     * @param {number} n
     * @param {number} nodders
     * @param {number} freq_hz
     */
    constructor(n, nodders, freq_hz) {
        const ret = wasm.traildemo_new(n, nodders, freq_hz);
        this.__wbg_ptr = ret;
        TrailDemoFinalization.register(this, this.__wbg_ptr, this);
        return this;
    }
    /**
     * @param {number} gain_x
     * @param {number} gain_y
     */
    set_gains(gain_x, gain_y) {
        wasm.traildemo_set_gains(this.__wbg_ptr, gain_x, gain_y);
    }
    /**
     * @param {number} recenter
     */
    set_recenter(recenter) {
        wasm.traildemo_set_recenter(this.__wbg_ptr, recenter);
    }
    /**
     * @returns {number}
     */
    slots() {
        const ret = wasm.traildemo_slots(this.__wbg_ptr);
        return ret >>> 0;
    }
    /**
     * Advances one tick and returns the frame flattened as
     * `[len, u0, v0, u1, v1, ...]` per slot, slots in order.
     * @returns {Float64Array}
     */
    step() {
        const ret = wasm.traildemo_step(this.__wbg_ptr);
        var v1 = getArrayF64FromWasm0(ret[0], ret[1]).slice();
        wasm.__wbindgen_free(ret[0], ret[1] * 8, 8);
        return v1;
    }
}
if (Symbol.dispose) TrailDemo.prototype[Symbol.dispose] = TrailDemo.prototype.free;

/**
 * Moving average of `values` over `window` samples, as the gaze pipeline applies it.
 * @param {Float64Array} values
 * @param {number} window
 * @returns {Float64Array}
 */
export function smooth_series(values, window) {
    const ptr0 = passArrayF64ToWasm0(values, wasm.__wbindgen_malloc);
    const len0 = WASM_VECTOR_LEN;
    const ret = wasm.smooth_series(ptr0, len0, window);
    var v2 = getArrayF64FromWasm0(ret[0], ret[1]).slice();
    wasm.__wbindgen_free(ret[0], ret[1] * 8, 8);
    return v2;
}
function __wbg_get_imports() {
    const import0 = {
        __proto__: null,
        __wbg___wbindgen_throw_344f42d3211c4765: function(arg0, arg1) {
            throw new Error(getStringFromWasm0(arg0, arg1));
        },
        __wbindgen_init_externref_table: function() {
            const table = wasm.__wbindgen_externrefs;
            const offset = table.grow(4);
            table.set(0, undefined);
            table.set(offset + 0, undefined);
            table.set(offset + 1, null);
            table.set(offset + 2, true);
            table.set(offset + 3, false);
        },
    };
    return {
        __proto__: null,
        "./calmrelay_demo_wasm_bg.js": import0,
    };
}

const HeatDemoFinalization = (typeof FinalizationRegistry === 'undefined')
    ? { register: () => {}, unregister: () => {} }
    : new FinalizationRegistry(ptr => wasm.__wbg_heatdemo_free(ptr, 1));
const TrailDemoFinalization = (typeof FinalizationRegistry === 'undefined')
    ? { register: () => {}, unregister: () => {} }
    : new FinalizationRegistry(ptr => wasm.__wbg_traildemo_free(ptr, 1));

function getArrayF64FromWasm0(ptr, len) {
    ptr = ptr >>> 0;
    return getFloat64ArrayMemory0().subarray(ptr / 8, ptr / 8 + len);
}

let cachedFloat64ArrayMemory0 = null;
function getFloat64ArrayMemory0() {
    if (cachedFloat64ArrayMemory0 === null || cachedFloat64ArrayMemory0.byteLength === 0) {
        cachedFloat64ArrayMemory0 = new Float64Array(wasm.memory.buffer);
    }
    return cachedFloat64ArrayMemory0;
}

function getStringFromWasm0(ptr, len) {
    return decodeText(ptr >>> 0, len);
}

let cachedUint8ArrayMemory0 = null;
function getUint8ArrayMemory0() {
    if (cachedUint8ArrayMemory0 === null || cachedUint8ArrayMemory0.byteLength === 0) {
        cachedUint8ArrayMemory0 = new Uint8Array(wasm.memory.buffer);
    }
    return cachedUint8ArrayMemory0;
}

function passArrayF64ToWasm0(arg, malloc) {
    const ptr = malloc(arg.length * 8, 8) >>> 0;
    getFloat64ArrayMemory0().set(arg, ptr / 8);
    WASM_VECTOR_LEN = arg.length;
    return ptr;
}

let cachedTextDecoder = new TextDecoder('utf-8', { ignoreBOM: true, fatal: true });
cachedTextDecoder.decode();
const MAX_SAFARI_DECODE_BYTES = 2146435072;
let numBytesDecoded = 0;
function decodeText(ptr, len) {
    numBytesDecoded += len;
    if (numBytesDecoded >= MAX_SAFARI_DECODE_BYTES) {
        cachedTextDecoder = new TextDecoder('utf-8', { ignoreBOM: true, fatal: true });
        cachedTextDecoder.decode();
        numBytesDecoded = len;
    }
    return cachedTextDecoder.decode(getUint8ArrayMemory0().subarray(ptr, ptr + len));
}

let WASM_VECTOR_LEN = 0;

let wasmModule, wasmInstance, wasm;
function __wbg_finalize_init(instance, module) {
    wasmInstance = instance;
    wasm = instance.exports;
    wasmModule = module;
    cachedFloat64ArrayMemory0 = null;
    cachedUint8ArrayMemory0 = null;
    wasm.__wbindgen_start();
    return wasm;
}

async function __wbg_load(module, imports) {
    if (typeof Response === 'function' && module instanceof Response) {
        if (typeof WebAssembly.instantiateStreaming === 'function') {
            try {
                return await WebAssembly.instantiateStreaming(module, imports);
            } catch (e) {
                const validResponse = module.ok && expectedResponseType(module.type);

                if (validResponse && module.headers.get('Content-Type') !== 'application/wasm') {
                    console.warn("`WebAssembly.instantiateStreaming` failed because your server does not serve Wasm with `application/wasm` MIME type. Falling back to `WebAssembly.instantiate` which is slower. Original error:\n", e);

                } else { throw e; }
            }
        }

        const bytes = await module.arrayBuffer();
        return await WebAssembly.instantiate(bytes, imports);
    } else {
        const instance = await WebAssembly.instantiate(module, imports);

        if (instance instanceof WebAssembly.Instance) {
            return { instance, module };
        } else {
            return instance;
        }
    }

    function expectedResponseType(type) {
        switch (type) {
            case 'basic': case 'cors': case 'default': return true;
        }
        return false;
    }
}

function initSync(module) {
    if (wasm !== undefined) return wasm;


    if (module !== undefined) {
        if (Object.getPrototypeOf(module) === Object.prototype) {
            ({module} = module)
        } else {
            console.warn('using deprecated parameters for `initSync()`; pass a single object instead')
        }
    }

    const imports = __wbg_get_imports();
    if (!(module instanceof WebAssembly.Module)) {
        module = new WebAssembly.Module(module);
    }
    const instance = new WebAssembly.Instance(module, imports);
    return __wbg_finalize_init(instance, module);
}

async function __wbg_init(module_or_path) {
    if (wasm !== undefined) return wasm;


    if (module_or_path !== undefined) {
        if (Object.getPrototypeOf(module_or_path) === Object.prototype) {
            ({module_or_path} = module_or_path)
        } else {
            console.warn('using deprecated parameters for the initialization function; pass a single object instead')
        }
    }

    if (module_or_path === undefined) {
        module_or_path = new URL('calmrelay_demo_wasm_bg.wasm', import.meta.url);
    }
    const imports = __wbg_get_imports();

    if (typeof module_or_path === 'string' || (typeof Request === 'function' && module_or_path instanceof Request) || (typeof URL === 'function' && module_or_path instanceof URL)) {
        module_or_path = fetch(module_or_path);
    }

    const { instance, module } = await __wbg_load(await module_or_path, imports);

    return __wbg_finalize_init(instance, module);
}

export { initSync, __wbg_init as default };

/**
 * Writer and validator for the engine's three-file corpus format:
 *
 *   <base>.jsonl       one {"doc_id", "sentences": [...], "target": str|null}
 *                      JSON object per document
 *   <base>.vec         binary sidecar: header {magic "USEG", u32 version=1,
 *                      u32 d, u64 total_vectors} followed by little-endian
 *                      float32 vectors in document order (per document: L
 *                      sentence vectors, then the target vector if present)
 *   <base>.index.json  {version, dim, model_version, documents:
 *                      {doc_id: {offset, length, has_target}}}; offset is a
 *                      vector index into the sidecar's data region
 */

import fs from 'node:fs'
import path from 'node:path'

export const MAGIC = 'USEG'
export const FORMAT_VERSION = 1
export const HEADER_BYTES = 4 + 4 + 4 + 8

export interface EmbeddedDocument {
    docId: string
    sentences: string[]
    sentenceEmbeddings: Float32Array[]
    target: string | null
    targetEmbedding: Float32Array | null
}

export interface CorpusPaths {
    docs: string
    vec: string
    index: string
}

/** Derive the three file paths from either the documents file or a base path. */
export function corpusPaths(p: string): CorpusPaths {
    const base = p.endsWith('.jsonl') ? p.slice(0, -'.jsonl'.length) : p
    return { docs: base + '.jsonl', vec: base + '.vec', index: base + '.index.json' }
}

function packHeader(dim: number, totalVectors: number): Buffer {
    const buf = Buffer.alloc(HEADER_BYTES)
    buf.write(MAGIC, 0, 'ascii')
    buf.writeUInt32LE(FORMAT_VERSION, 4)
    buf.writeUInt32LE(dim, 8)
    buf.writeBigUInt64LE(BigInt(totalVectors), 12)
    return buf
}

/** Write the three corpus files. Validates everything before touching disk. */
export function writeCorpus(
    docs: EmbeddedDocument[],
    dim: number,
    outBase: string,
    modelVersion: string
): CorpusPaths {
    const seen = new Set<string>()
    for (const doc of docs) {
        if (seen.has(doc.docId)) throw new Error(`duplicate doc_id ${doc.docId}`)
        seen.add(doc.docId)
        if (doc.sentences.length === 0)
            throw new Error(`doc ${doc.docId} has no sentences`)
        if (doc.sentences.length !== doc.sentenceEmbeddings.length)
            throw new Error(`doc ${doc.docId}: sentence/embedding count mismatch`)
        if ((doc.target === null) !== (doc.targetEmbedding === null))
            throw new Error(`doc ${doc.docId}: target text/embedding mismatch`)
        for (const [i, vec] of allVectors(doc).entries()) {
            if (vec.length !== dim)
                throw new Error(`doc ${doc.docId} vector ${i}: dim ${vec.length} != ${dim}`)
            if (!vec.every(Number.isFinite))
                throw new Error(`doc ${doc.docId} vector ${i}: non-finite entry`)
        }
    }

    const paths = corpusPaths(outBase)
    fs.mkdirSync(path.dirname(paths.docs), { recursive: true })

    const chunks: Buffer[] = []
    const entries: Record<string, { offset: number; length: number; has_target: boolean }> = {}
    const lines: string[] = []
    let offset = 0
    for (const doc of docs) {
        const vectors = allVectors(doc)
        for (const vec of vectors) {
            chunks.push(Buffer.from(vec.buffer, vec.byteOffset, vec.byteLength))
        }
        entries[doc.docId] = {
            offset,
            length: doc.sentences.length,
            has_target: doc.target !== null,
        }
        offset += vectors.length
        lines.push(
            JSON.stringify({
                doc_id: doc.docId,
                sentences: doc.sentences,
                target: doc.target,
            })
        )
    }

    fs.writeFileSync(paths.vec, Buffer.concat([packHeader(dim, offset), ...chunks]))
    fs.writeFileSync(paths.docs, lines.join('\n') + '\n')
    fs.writeFileSync(
        paths.index,
        JSON.stringify(
            {
                version: FORMAT_VERSION,
                dim,
                model_version: modelVersion,
                documents: entries,
            },
            null,
            1
        )
    )
    return paths
}

function allVectors(doc: EmbeddedDocument): Float32Array[] {
    return doc.targetEmbedding
        ? [...doc.sentenceEmbeddings, doc.targetEmbedding]
        : doc.sentenceEmbeddings
}

export interface ValidationReport {
    dim: number
    modelVersion: string | null
    nDocs: number
    nVectors: number
    normMin: number
    normMax: number
    normMean: number
}

/**
 * Re-run the engine-side loading checks on an exported corpus and report
 * dimension, counts, and norm statistics. Throws on any invariant violation.
 */
export function validateCorpus(basePath: string, maxSentences = 800): ValidationReport {
    const paths = corpusPaths(basePath)
    for (const p of Object.values(paths)) {
        if (!fs.existsSync(p)) throw new Error(`missing corpus file: ${p}`)
    }

    const raw = fs.readFileSync(paths.vec)
    if (raw.length < HEADER_BYTES) throw new Error(`${paths.vec}: truncated header`)
    const magic = raw.toString('ascii', 0, 4)
    if (magic !== MAGIC) throw new Error(`${paths.vec}: bad magic ${JSON.stringify(magic)}`)
    const version = raw.readUInt32LE(4)
    if (version !== FORMAT_VERSION)
        throw new Error(`${paths.vec}: unsupported version ${version}`)
    const dim = raw.readUInt32LE(8)
    const total = Number(raw.readBigUInt64LE(12))
    const expected = HEADER_BYTES + 4 * dim * total
    if (raw.length !== expected)
        throw new Error(
            `${paths.vec}: size mismatch, header promises ${total} vectors of ` +
                `dim ${dim} (${expected} bytes), file has ${raw.length} bytes`
        )

    const index = JSON.parse(fs.readFileSync(paths.index, 'utf-8'))
    if (index.dim !== dim)
        throw new Error(`${paths.index}: dim ${index.dim} does not match sidecar d=${dim}`)
    const modelVersion = index.model_version ?? null
    if (modelVersion !== null && typeof modelVersion !== 'string')
        throw new Error(`${paths.index}: model_version must be a string or null`)
    const entries = index.documents ?? {}

    let normMin = Infinity
    let normMax = -Infinity
    let normSum = 0
    const norm = (vecIdx: number): number => {
        let sq = 0
        const byteBase = HEADER_BYTES + 4 * dim * vecIdx
        for (let k = 0; k < dim; k++) {
            const v = raw.readFloatLE(byteBase + 4 * k)
            if (!Number.isFinite(v)) throw new Error(`vector ${vecIdx}: non-finite entry`)
            sq += v * v
        }
        return Math.sqrt(sq)
    }

    const lines = fs
        .readFileSync(paths.docs, 'utf-8')
        .split('\n')
        .filter((l) => l.trim().length > 0)
    const seen = new Set<string>()
    let nVectors = 0
    for (const [i, line] of lines.entries()) {
        let rec: { doc_id?: string; sentences?: string[]; target?: string | null }
        try {
            rec = JSON.parse(line)
        } catch (err) {
            throw new Error(`${paths.docs}:${i + 1}: malformed JSON: ${err}`)
        }
        if (!rec.doc_id || !Array.isArray(rec.sentences) || rec.sentences.length === 0)
            throw new Error(`${paths.docs}:${i + 1}: missing doc_id or sentences`)
        if (seen.has(rec.doc_id))
            throw new Error(`${paths.docs}:${i + 1}: duplicate doc_id ${rec.doc_id}`)
        seen.add(rec.doc_id)
        if (rec.sentences.length > maxSentences)
            throw new Error(
                `${paths.docs}:${i + 1}: ${rec.sentences.length} sentences, ` +
                    `limit is ${maxSentences}`
            )
        const entry = entries[rec.doc_id]
        if (!entry) throw new Error(`${paths.index}: no entry for doc_id ${rec.doc_id}`)
        if (entry.length !== rec.sentences.length)
            throw new Error(
                `${paths.index}: doc ${rec.doc_id} length ${entry.length} != ` +
                    `${rec.sentences.length} sentences`
            )
        const hasTarget = rec.target !== null && rec.target !== undefined
        if (entry.has_target !== hasTarget)
            throw new Error(`${paths.index}: doc ${rec.doc_id} has_target mismatch`)
        const count = entry.length + (hasTarget ? 1 : 0)
        if (entry.offset < 0 || entry.offset + count > total)
            throw new Error(`${paths.index}: doc ${rec.doc_id} vectors out of range`)
        for (let v = entry.offset; v < entry.offset + count; v++) {
            const n = norm(v)
            if (n < 0.9 || n > 1.1)
                throw new Error(
                    `doc ${rec.doc_id} vector ${v - entry.offset}: ` +
                        `norm ${n.toFixed(6)} outside [0.9, 1.1]`
                )
            normMin = Math.min(normMin, n)
            normMax = Math.max(normMax, n)
            normSum += n
            nVectors++
        }
    }

    return {
        dim,
        modelVersion,
        nDocs: lines.length,
        nVectors,
        normMin,
        normMax,
        normMean: nVectors ? normSum / nVectors : 0,
    }
}

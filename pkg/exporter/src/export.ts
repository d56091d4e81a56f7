/**
 * Export pipeline: raw review JSONL ({"doc_id", "sentences", "target"}) in,
 * the engine's three-file corpus format out.
 */

import fs from 'node:fs'
import { z } from 'zod'

import { SentenceEncoder } from './encoders.js'
import { CorpusPaths, EmbeddedDocument, writeCorpus } from './format.js'

export interface ExportJob {
    input: string
    outBase: string
    batchSize: number
    normalize: boolean
}

const inputRecord = z.object({
    doc_id: z.string().min(1),
    sentences: z.array(z.string().min(1)).min(1),
    target: z.string().min(1).nullable().optional().default(null),
})

export interface RawDocument {
    docId: string
    sentences: string[]
    target: string | null
}

export function readInput(path: string): RawDocument[] {
    const lines = fs
        .readFileSync(path, 'utf-8')
        .split('\n')
        .filter((l) => l.trim().length > 0)
    if (lines.length === 0) throw new Error(`${path}: no documents`)
    const docs: RawDocument[] = []
    const seen = new Set<string>()
    for (const [i, line] of lines.entries()) {
        let parsed: unknown
        try {
            parsed = JSON.parse(line)
        } catch (err) {
            throw new Error(`${path}:${i + 1}: malformed JSON: ${err}`)
        }
        const res = inputRecord.safeParse(parsed)
        if (!res.success) {
            const docId = (parsed as { doc_id?: string })?.doc_id ?? '<unknown>'
            throw new Error(`${path}:${i + 1} (doc ${docId}): ${res.error.issues[0].message}`)
        }
        if (seen.has(res.data.doc_id))
            throw new Error(`${path}:${i + 1}: duplicate doc_id ${res.data.doc_id}`)
        seen.add(res.data.doc_id)
        docs.push({
            docId: res.data.doc_id,
            sentences: res.data.sentences,
            target: res.data.target,
        })
    }
    return docs
}

function renormalize(vec: Float32Array): Float32Array {
    let sq = 0
    for (const v of vec) sq += v * v
    const n = Math.sqrt(sq)
    if (n === 0) throw new Error('cannot normalize a zero vector')
    const out = new Float32Array(vec.length)
    for (let k = 0; k < vec.length; k++) out[k] = vec[k] / n
    return out
}

async function encodeBatched(
    encoder: SentenceEncoder,
    texts: string[],
    batchSize: number,
    normalize: boolean
): Promise<Float32Array[]> {
    const out: Float32Array[] = []
    for (let i = 0; i < texts.length; i += batchSize) {
        const batch = await encoder.encode(texts.slice(i, i + batchSize))
        out.push(...(normalize ? batch.map(renormalize) : batch))
    }
    return out
}

export async function runExport(job: ExportJob, encoder: SentenceEncoder): Promise<CorpusPaths> {
    if (job.batchSize < 1) throw new Error('batch_size must be >= 1')
    const raw = readInput(job.input)
    const docs: EmbeddedDocument[] = []
    for (const doc of raw) {
        const texts = doc.target ? [...doc.sentences, doc.target] : doc.sentences
        let embeddings: Float32Array[]
        try {
            embeddings = await encodeBatched(encoder, texts, job.batchSize, job.normalize)
        } catch (err) {
            throw new Error(`doc ${doc.docId}: ${err instanceof Error ? err.message : err}`)
        }
        docs.push({
            docId: doc.docId,
            sentences: doc.sentences,
            sentenceEmbeddings: embeddings.slice(0, doc.sentences.length),
            target: doc.target,
            targetEmbedding: doc.target ? embeddings[embeddings.length - 1] : null,
        })
    }
    return writeCorpus(docs, encoder.dim, job.outBase, encoder.modelVersion)
}
